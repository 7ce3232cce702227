// SPDX-License-Identifier: Apache-2.0

//! Optional convergence detector: the BBR throughput share is tracked over
//! consecutive blocks, and the run counts as converged from the first block
//! after which the share never moves faster than a slope threshold.

use crate::metrics::Window;
use crate::trace::SimTrace;

/// Blocks the run is cut into when estimating the share's slope.
const BLOCKS: usize = 50;

/// Time from which the BBR share stays within `slope` per second, or `None`
/// when it never settles or the trace has no BBR or no traffic.
pub fn convergence_time(trace: &SimTrace, slope: f64) -> Option<f64> {
    let end = trace.duration();
    if end <= 0.0 || !trace.ccas.iter().any(|k| k.is_bbr()) {
        return None;
    }
    let block = end / BLOCKS as f64;
    let shares: Vec<(f64, f64)> = (0..BLOCKS)
        .filter_map(|k| {
            let (a, b) = (k as f64 * block, (k + 1) as f64 * block);
            let w = Window::between(trace, a, b).ok()?;
            let tp = crate::metrics::per_flow_throughput(trace, w);
            let total: f64 = tp.iter().sum();
            let bbr: f64 = tp.iter().zip(&trace.ccas).filter(|(_, k)| k.is_bbr()).map(|(x, _)| x).sum();
            (total > 0.0).then_some((a, bbr / total))
        })
        .collect();
    let steep = |w: &[(f64, f64)]| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs() >= slope;
    match shares.windows(2).rposition(steep) {
        Some(i) if i + 2 < shares.len() => Some(shares[i + 1].0),
        Some(_) => None,
        None => shares.first().map(|s| s.0),
    }
}
