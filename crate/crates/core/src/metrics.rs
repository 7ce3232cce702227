// SPDX-License-Identifier: Apache-2.0

//! Reductions from a trace to fairness, loss, utilization and occupancy over
//! an analysis window, plus model-vs-measurement scoring.

use crate::config::CcaKind;
use crate::error::{Error, Result};
use crate::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FractionMode {
    /// Σ BBR goodput / configured capacity.
    #[default]
    OfCapacity,
    /// Σ BBR goodput / Σ goodput.
    OfTotal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    /// Mean goodput per flow over the window, bits per second.
    pub per_flow_throughput: Vec<f64>,
    /// `None` when the scenario has no BBR flow.
    pub bbr_fraction: Option<f64>,
    /// `None` when nothing was delivered.
    pub jfi: Option<f64>,
    pub loss_rate: f64,
    pub utilization: f64,
    pub buffer_occupancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelScore {
    pub mse: f64,
    pub rmse: f64,
    /// `(buffer_bdp, predicted − measured)` per grid point.
    pub residuals: Vec<(f64, f64)>,
}

/// An analysis window `[start, end]` resolved to trace sample indices.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub first: usize,
    pub last: usize,
    pub length: f64,
}

impl Window {
    /// The final `length` seconds of `trace`.
    pub fn suffix(trace: &SimTrace, length: f64) -> Result<Self> {
        let end = trace.duration();
        Self::between(trace, end - length, end)
    }

    pub fn between(trace: &SimTrace, start: f64, end: f64) -> Result<Self> {
        if !(end - start > 0.0) {
            return Err(Error::InvalidInput("zero-length analysis window".into()));
        }
        let outside = || {
            Error::InvalidInput(format!(
                "window [{start}, {end}] outside trace extent [0, {}]",
                trace.duration()
            ))
        };
        if start < -1e-9 {
            return Err(outside());
        }
        let first = trace.index_at(start).ok_or_else(outside)?;
        let last = trace.index_at(end).ok_or_else(outside)?;
        let length = trace.samples[last].t - trace.samples[first].t;
        if !(length > 0.0) {
            return Err(Error::InvalidInput("zero-length analysis window".into()));
        }
        Ok(Self { first, last, length })
    }
}

/// Mean goodput of every flow over the window, bits per second.
pub fn per_flow_throughput(trace: &SimTrace, w: Window) -> Vec<f64> {
    let (a, b) = (&trace.samples[w.first], &trace.samples[w.last]);
    a.flows
        .iter()
        .zip(&b.flows)
        .map(|(x, y)| (y.delivered - x.delivered) * 8.0 / w.length)
        .collect()
}

/// Aggregate BBR share of `throughputs`.
pub fn bbr_fraction(
    throughputs: &[f64],
    kinds: &[CcaKind],
    capacity: f64,
    mode: FractionMode,
) -> Result<f64> {
    if throughputs.len() != kinds.len() || throughputs.is_empty() {
        return Err(Error::InvalidInput("throughputs and kinds must align and be non-empty".into()));
    }
    if !kinds.iter().any(|k| k.is_bbr()) {
        return Err(Error::InvalidInput("no BBR flow in the set".into()));
    }
    let bbr: f64 = throughputs
        .iter()
        .zip(kinds)
        .filter(|(_, k)| k.is_bbr())
        .map(|(x, _)| x)
        .sum();
    let denom = match mode {
        FractionMode::OfCapacity => capacity,
        FractionMode::OfTotal => throughputs.iter().sum(),
    };
    if !(denom > 0.0) {
        return Err(Error::InvalidInput("fraction denominator is zero".into()));
    }
    Ok((bbr / denom).clamp(0.0, 1.0))
}

/// Share of the loss-based flows, the complement of [`bbr_fraction`] in
/// [`FractionMode::OfTotal`].
pub fn loss_based_fraction(throughputs: &[f64], kinds: &[CcaKind]) -> Result<f64> {
    let total: f64 = throughputs.iter().sum();
    if !(total > 0.0) || throughputs.len() != kinds.len() {
        return Err(Error::InvalidInput("nothing delivered".into()));
    }
    let loss: f64 = throughputs
        .iter()
        .zip(kinds)
        .filter(|(_, k)| !k.is_bbr())
        .map(|(x, _)| x)
        .sum();
    Ok(loss / total)
}

/// Jain's fairness index `(Σx)² / (n Σx²)`.
pub fn jfi(throughputs: &[f64]) -> Result<f64> {
    if throughputs.is_empty() {
        return Err(Error::InvalidInput("jfi of an empty set".into()));
    }
    if throughputs.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidInput("jfi needs non-negative rates".into()));
    }
    let sum: f64 = throughputs.iter().sum();
    let sq: f64 = throughputs.iter().map(|x| x * x).sum();
    if !(sum > 0.0) {
        return Err(Error::InvalidInput("jfi of an all-zero set".into()));
    }
    Ok(sum * sum / (throughputs.len() as f64 * sq))
}

/// Dropped over sent bytes (all packets are MTU-sized, so also packets).
pub fn loss_rate(trace: &SimTrace, w: Window) -> f64 {
    let (a, b) = (&trace.samples[w.first], &trace.samples[w.last]);
    let (mut sent, mut dropped) = (0.0, 0.0);
    for (x, y) in a.flows.iter().zip(&b.flows) {
        sent += y.sent - x.sent;
        dropped += y.dropped - x.dropped;
    }
    if sent > 0.0 {
        (dropped / sent).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Delivered payload bits over `capacity × window`.
pub fn utilization(trace: &SimTrace, w: Window) -> f64 {
    let total: f64 = per_flow_throughput(trace, w).iter().sum();
    (total / trace.capacity).clamp(0.0, 1.0)
}

/// Time-averaged queue occupancy as a fraction of the buffer limit.
pub fn buffer_occupancy(trace: &SimTrace, w: Window) -> f64 {
    let (a, b) = (&trace.samples[w.first], &trace.samples[w.last]);
    let mean = (b.queue_integral - a.queue_integral) / w.length;
    (mean / trace.buffer_bytes).clamp(0.0, 1.0)
}

pub fn summarize(trace: &SimTrace, analysis_window: f64, mode: FractionMode) -> Result<MetricsSummary> {
    let w = Window::suffix(trace, analysis_window)?;
    let per_flow = per_flow_throughput(trace, w);
    let bbr = if trace.ccas.iter().any(|k| k.is_bbr()) {
        bbr_fraction(&per_flow, &trace.ccas, trace.capacity, mode).ok()
    } else {
        None
    };
    Ok(MetricsSummary {
        bbr_fraction: bbr,
        jfi: jfi(&per_flow).ok(),
        loss_rate: loss_rate(trace, w),
        utilization: utilization(trace, w),
        buffer_occupancy: buffer_occupancy(trace, w),
        per_flow_throughput: per_flow,
    })
}

/// Mean squared error between two curves on the same buffer grid.
pub fn score_model(predicted: &[(f64, f64)], measured: &[(f64, f64)]) -> Result<ModelScore> {
    if predicted.is_empty() || predicted.len() != measured.len() {
        return Err(Error::InvalidInput(format!(
            "curves must be non-empty and equal length ({} vs {})",
            predicted.len(),
            measured.len()
        )));
    }
    let mut residuals = Vec::with_capacity(predicted.len());
    for (p, m) in predicted.iter().zip(measured) {
        if (p.0 - m.0).abs() > 1e-9 * p.0.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "misaligned buffer grids: {} vs {}",
                p.0, m.0
            )));
        }
        residuals.push((p.0, p.1 - m.1));
    }
    let mse = residuals.iter().map(|(_, r)| r * r).sum::<f64>() / residuals.len() as f64;
    Ok(ModelScore {
        mse,
        rmse: mse.sqrt(),
        residuals,
    })
}

/// Sample mean and standard error of the mean. One value has zero error.
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{FlowCounters, Sample, TraceSource};
    use proptest::prelude::*;

    fn trace_with(queue: impl Fn(f64) -> f64, rate_bps: &[f64], drop_every: u32) -> SimTrace {
        // 10 Mbps link, 100 kB buffer, 10 s at 0.1 s samples.
        let mut t = SimTrace::empty(TraceSource::Packetsim, 100_000.0, 10e6);
        t.flow_ids = (0..rate_bps.len() as u32).collect();
        t.ccas = vec![CcaKind::BbrV1; rate_bps.len()];
        let mut integral = 0.0;
        for i in 0..=100 {
            let time = i as f64 * 0.1;
            if i > 0 {
                integral += queue(time) * 0.1;
            }
            let flows = rate_bps
                .iter()
                .map(|r| {
                    let delivered = r / 8.0 * time;
                    let dropped = if drop_every > 0 { (delivered / f64::from(drop_every)).floor() } else { 0.0 };
                    FlowCounters {
                        delivered,
                        sent: delivered + dropped,
                        dropped,
                        in_network: 0.0,
                        received: delivered,
                    }
                })
                .collect();
            t.samples.push(Sample {
                t: time,
                flows,
                queue_bytes: queue(time),
                queue_integral: integral,
            });
        }
        t
    }

    #[test]
    fn bbr_fraction_examples() {
        let k = [CcaKind::BbrV1, CcaKind::Cubic];
        let f = bbr_fraction(&[6e6, 0.0], &k, 10e6, FractionMode::OfCapacity).unwrap();
        assert!((f - 0.6).abs() < 1e-12);
        let all = [CcaKind::BbrV1, CcaKind::BbrV2];
        let f = bbr_fraction(&[5e6, 5e6], &all, 10e6, FractionMode::OfTotal).unwrap();
        assert_eq!(f, 1.0);
        let cap = bbr_fraction(&[4e6, 5e6], &k, 10e6, FractionMode::OfCapacity).unwrap();
        let tot = bbr_fraction(&[4e6, 5e6], &k, 10e6, FractionMode::OfTotal).unwrap();
        assert!((cap - 0.4).abs() < 1e-12);
        assert!((tot - 4.0 / 9.0).abs() < 1e-12);
        assert!(bbr_fraction(&[1.0], &[CcaKind::Cubic], 10.0, FractionMode::OfTotal).is_err());
    }

    #[test]
    fn jfi_examples() {
        assert_eq!(jfi(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(jfi(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert_eq!(jfi(&[3.0, 1.0]).unwrap(), 0.8);
        assert!(jfi(&[0.0, 0.0]).is_err());
        assert!(jfi(&[]).is_err());
    }

    #[test]
    fn window_metrics_examples() {
        let t = trace_with(|_| 0.0, &[5e6, 5e6], 0);
        let w = Window::suffix(&t, 5.0).unwrap();
        assert_eq!(loss_rate(&t, w), 0.0);
        assert!((utilization(&t, w) - 1.0).abs() < 1e-9);
        assert_eq!(buffer_occupancy(&t, w), 0.0);

        let pinned = trace_with(|_| 100_000.0, &[10e6], 0);
        let w = Window::suffix(&pinned, 5.0).unwrap();
        assert!((buffer_occupancy(&pinned, w) - 1.0).abs() < 1e-9);

        let lossy = trace_with(|_| 0.0, &[10e6], 15_000);
        let w = Window::suffix(&lossy, 5.0).unwrap();
        let l = loss_rate(&lossy, w);
        assert!(l > 0.0 && l < 0.01, "{l}");
    }

    #[test]
    fn window_rejects_bad_ranges() {
        let t = trace_with(|_| 0.0, &[1e6], 0);
        assert!(Window::suffix(&t, 0.0).is_err());
        assert!(Window::suffix(&t, 20.0).is_err());
        assert!(Window::between(&t, 3.0, 3.0).is_err());
    }

    #[test]
    fn summarize_reports_fraction_and_fairness() {
        let t = trace_with(|_| 50_000.0, &[6e6, 2e6], 0);
        let s = summarize(&t, 5.0, FractionMode::OfCapacity).unwrap();
        assert!((s.bbr_fraction.unwrap() - 0.8).abs() < 1e-9);
        assert!((s.jfi.unwrap() - 0.8).abs() < 1e-9);
        assert!((s.buffer_occupancy - 0.5).abs() < 1e-9);
    }

    #[test]
    fn score_examples() {
        let same = [(1.0, 0.3), (2.0, 0.4)];
        assert_eq!(score_model(&same, &same).unwrap().mse, 0.0);

        let s = score_model(&[(1.0, 0.5), (2.0, 0.6)], &[(1.0, 0.4), (2.0, 0.8)]).unwrap();
        assert!((s.mse - 0.025).abs() < 1e-9);
        assert!((s.rmse - 0.1581).abs() < 1e-4);
        assert!((s.rmse - s.mse.sqrt()).abs() < 1e-15);
        assert_eq!(s.residuals.len(), 2);

        assert!(score_model(&[(1.0, 0.5)], &[(2.0, 0.5)]).is_err());
        assert!(score_model(&[(1.0, 0.5)], &[]).is_err());
    }

    #[test]
    fn stderr_of_three() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[0.4]).unwrap(), (0.4, 0.0));
        assert!(mean_stderr(&[]).is_none());
    }

    proptest! {
        #[test]
        fn jfi_scale_invariant(xs in proptest::collection::vec(0.0f64..1e9, 1..20), c in 1e-6f64..1e6) {
            prop_assume!(xs.iter().sum::<f64>() > 0.0);
            let a = jfi(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let b = jfi(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!(a >= 1.0 / xs.len() as f64 - 1e-12 && a <= 1.0 + 1e-12);
        }

        #[test]
        fn score_symmetric(pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..10)) {
            let p: Vec<_> = pairs.iter().enumerate().map(|(i, (a, _))| (i as f64, *a)).collect();
            let m: Vec<_> = pairs.iter().enumerate().map(|(i, (_, b))| (i as f64, *b)).collect();
            prop_assert_eq!(score_model(&p, &m).unwrap().mse, score_model(&m, &p).unwrap().mse);
        }

        #[test]
        fn of_total_fractions_sum_to_one(xs in proptest::collection::vec((0.0f64..1e8, any::<bool>()), 1..12)) {
            let rates: Vec<f64> = xs.iter().map(|x| x.0).collect();
            let kinds: Vec<CcaKind> = xs.iter().map(|x| if x.1 { CcaKind::BbrV1 } else { CcaKind::Cubic }).collect();
            prop_assume!(kinds.iter().any(|k| k.is_bbr()) && rates.iter().sum::<f64>() > 0.0);
            let b = bbr_fraction(&rates, &kinds, 1.0, FractionMode::OfTotal).unwrap();
            let l = loss_based_fraction(&rates, &kinds).unwrap();
            prop_assert!((b + l - 1.0).abs() < 1e-12);
        }
    }
}
