// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use super::matrix::{ExperimentMatrix, FlowMix, DEFAULT_BUFFERS};
use crate::config::{CcaKind, ExtraDelay, LinkConfig, ScenarioConfig};
use crate::error::{Error, Result};

pub const PRESETS: [&str; 4] = [
    "ware-40ms-10mbps",
    "ware-30ms-50mbps",
    "ware-10ms-40mbps-text",
    "scherrer-100mbps",
];

const WARE_DURATION: f64 = 1000.0;
const WARE_WINDOW_CUBIC: f64 = 400.0;
const WARE_WINDOW_RENO: f64 = 200.0;
const SCHERRER_DURATION: f64 = 300.0;
const SCHERRER_WINDOW: f64 = 120.0;
const SCHERRER_BUFFERS: [f64; 11] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 16.0, 32.0, 64.0];

const DEFAULT_TRIALS: u32 = 3;
const DEFAULT_SEED: u64 = 1;

/// Matrix for a named preset with its default mix, engines and time scale.
pub fn preset(name: &str) -> Result<ExperimentMatrix> {
    let ware = |mbps: f64, ms: f64| {
        let mix = FlowMix::versus(CcaKind::BbrV1, 1, CcaKind::Cubic, 1);
        build(name, mbps, ms, mix, ExtraDelay::Fixed(0.0), WARE_DURATION, &DEFAULT_BUFFERS, 0.1)
    };
    match name {
        "ware-40ms-10mbps" => ware(10.0, 40.0),
        "ware-30ms-50mbps" => ware(50.0, 30.0),
        "ware-10ms-40mbps-text" => ware(40.0, 10.0),
        "scherrer-100mbps" => build(
            name,
            100.0,
            30.0,
            FlowMix::versus(CcaKind::BbrV1, 5, CcaKind::Cubic, 5),
            // One-way sender delay; the RTT spans 30 to 40 ms.
            ExtraDelay::Uniform { lo: 0.0, hi: 0.005 },
            SCHERRER_DURATION,
            &SCHERRER_BUFFERS,
            1.0,
        ),
        _ => Err(Error::UnknownPreset {
            name: name.to_owned(),
            valid: PRESETS.to_vec(),
        }),
    }
}

/// Packet-level analysis window at nominal scale for a named preset and
/// `mix`: the final 200 s against Reno and 400 s otherwise in the long
/// runs, the final 2 minutes in the ten-sender runs.
pub fn analysis_window(preset: &str, mix: &FlowMix) -> Option<f64> {
    let nominal = nominal_duration(preset)?;
    Some(if nominal == SCHERRER_DURATION {
        SCHERRER_WINDOW
    } else if mix.contains(CcaKind::Reno) {
        WARE_WINDOW_RENO
    } else {
        WARE_WINDOW_CUBIC
    })
}

/// Nominal packet-level duration, used to recover the time scale of a row.
pub fn nominal_duration(preset: &str) -> Option<f64> {
    match preset {
        p if PRESETS.contains(&p) && p.starts_with("ware-") => Some(WARE_DURATION),
        p if PRESETS.contains(&p) => Some(SCHERRER_DURATION),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    name: &str,
    mbps: f64,
    rtt_ms: f64,
    mix: FlowMix,
    sender_delay: ExtraDelay,
    duration: f64,
    buffers: &[f64],
    time_scale: f64,
) -> Result<ExperimentMatrix> {
    let link = LinkConfig::from_mbps_ms(mbps, rtt_ms, buffers[0])?;
    let template = ScenarioConfig {
        link,
        flows: mix.flows(sender_delay),
        duration,
        analysis_window: analysis_window(name, &mix).unwrap_or(duration),
        trials: DEFAULT_TRIALS,
        seed: DEFAULT_SEED,
    };
    let mut m = ExperimentMatrix {
        preset: name.to_owned(),
        template,
        default_mix: mix.clone(),
        mix,
        sender_delay,
        buffers: buffers.to_vec(),
        engines: Vec::new(),
        time_scale,
        jobs: 1,
        out_dir: PathBuf::from("results"),
        fluid_v3: false,
        convergence_slope: None,
    };
    m.engines = m.applicable_engines();
    Ok(m)
}

/// Matrix around a user scenario: its link, flows and windows are used as
/// given and the sweep defaults to its own buffer size.
pub fn from_scenario(label: &str, scenario: ScenarioConfig) -> Result<ExperimentMatrix> {
    let scenario = scenario.validated()?;
    let mut groups: Vec<(u32, CcaKind)> = Vec::new();
    for f in &scenario.flows {
        match groups.last_mut() {
            Some((n, k)) if *k == f.cca => *n += 1,
            _ => groups.push((1, f.cca)),
        }
    }
    let mix = FlowMix { groups };
    let sender_delay = scenario.flows.first().map(|f| f.sender_extra_delay).unwrap_or_default();
    let mut m = ExperimentMatrix {
        preset: label.to_owned(),
        buffers: vec![scenario.link.buffer_bdp],
        template: scenario,
        default_mix: mix.clone(),
        mix,
        sender_delay,
        engines: Vec::new(),
        time_scale: 1.0,
        jobs: 1,
        out_dir: PathBuf::from("results"),
        fluid_v3: false,
        convergence_slope: None,
    };
    m.engines = m.applicable_engines();
    Ok(m)
}
