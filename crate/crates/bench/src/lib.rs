// SPDX-License-Identifier: Apache-2.0

//! Fixed workloads shared by the engine benchmarks.

use bbrlab_core::{CcaKind, ExtraDelay, FlowSpec, LinkConfig, ScenarioConfig};

/// `n` BBR flows of `bbr` against `n` CUBIC flows.
pub fn versus(bbr: CcaKind, n: u32, link: LinkConfig, duration: f64) -> ScenarioConfig {
    let flows = (0..2 * n)
        .map(|i| {
            let kind = if i < n { bbr } else { CcaKind::Cubic };
            FlowSpec::new(i, kind).with_extra_delay(ExtraDelay::Uniform { lo: 0.0, hi: 0.005 })
        })
        .collect();
    ScenarioConfig {
        link,
        flows,
        duration,
        analysis_window: duration / 2.0,
        trials: 1,
        seed: 1,
    }
}

/// 1 vs 1 on 10 Mbps × 40 ms.
pub fn two_flow(bbr: CcaKind, buffer_bdp: f64, duration: f64) -> ScenarioConfig {
    versus(bbr, 1, LinkConfig::from_mbps_ms(10.0, 40.0, buffer_bdp).unwrap(), duration)
}

/// 5 vs 5 on 100 Mbps × 30 ms.
pub fn ten_flow(bbr: CcaKind, buffer_bdp: f64, duration: f64) -> ScenarioConfig {
    versus(bbr, 5, LinkConfig::from_mbps_ms(100.0, 30.0, buffer_bdp).unwrap(), duration)
}
