// SPDX-License-Identifier: Apache-2.0

//! Closed-form share of a bottleneck captured by BBRv1 flows competing with
//! loss-based flows.
//!
//! In a congested queue BBRv1 is window-limited by its in-flight cap of
//! `2 × BtlBw × RTprop`. Setting that cap equal to the data BBR actually has
//! in flight yields the aggregate loss-based share
//!
//! ```text
//! p = 1/2 − 1/(2X) − 4N/q
//! ```
//!
//! for a buffer of `X` BDP (`q` packets) shared with `N` BBR flows. BBR then
//! holds `1 − p` of the link except while it sits in ProbeRTT:
//!
//! ```text
//! bbr_fraction = (1 − p) × (d − probe_time) / d
//! ```
//!
//! The inputs deliberately carry no count of loss-based flows: the cap does
//! not depend on it.

use crate::config::LinkConfig;
use crate::error::{Error, Result};

pub const DEFAULT_PROBE_RTT_INTERVAL: f64 = 10.0;
pub const DEFAULT_PROBE_RTT_DURATION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateInputs {
    /// `X`: buffer size in BDP.
    pub buffer_bdp: f64,
    /// `N`: number of BBR flows.
    pub bbr_flow_count: u32,
    /// `q`: buffer size in packets.
    pub buffer_packets: u64,
    /// `d`: post-convergence duration, seconds.
    pub post_convergence_duration: f64,
    pub probertt_interval: f64,
    pub probertt_duration: f64,
    /// Extra seconds per ProbeRTT episode spent draining the queue. Only
    /// used when set; the plain model has no drain term.
    pub drain_time: Option<f64>,
}

impl SteadyStateInputs {
    pub fn new(
        buffer_bdp: f64,
        bbr_flow_count: u32,
        buffer_packets: u64,
        post_convergence_duration: f64,
    ) -> Result<Self> {
        Self {
            buffer_bdp,
            bbr_flow_count,
            buffer_packets,
            post_convergence_duration,
            probertt_interval: DEFAULT_PROBE_RTT_INTERVAL,
            probertt_duration: DEFAULT_PROBE_RTT_DURATION,
            drain_time: None,
        }
        .validated()
    }

    /// Derives `X` and `q` from a link.
    pub fn from_link(link: &LinkConfig, bbr_flow_count: u32, d: f64) -> Result<Self> {
        Self::new(link.buffer_bdp, bbr_flow_count, link.buffer_packets(), d)
    }

    pub fn with_probe_rtt(mut self, interval: f64, duration: f64) -> Result<Self> {
        self.probertt_interval = interval;
        self.probertt_duration = duration;
        self.validated()
    }

    pub fn drain_aware(mut self, drain_time: f64) -> Result<Self> {
        self.drain_time = Some(drain_time);
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let mut v = Vec::new();
        if !(self.buffer_bdp > 0.0) {
            v.push("X must be positive");
        }
        if self.bbr_flow_count < 1 {
            v.push("N must be at least 1");
        }
        if self.buffer_packets < 1 {
            v.push("q must be at least 1");
        }
        if !(self.post_convergence_duration > 0.0) {
            v.push("d must be positive");
        }
        if !(self.probertt_duration >= 0.0 && self.probertt_duration < self.probertt_interval) {
            v.push("ProbeRTT duration must lie in [0, interval)");
        }
        if matches!(self.drain_time, Some(t) if !(t >= 0.0)) {
            v.push("drain time must be non-negative");
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidInput(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStatePrediction {
    /// `p`: aggregate share of the loss-based flows, clamped to `[0, 1]`.
    pub loss_based_fraction: f64,
    pub bbr_fraction: f64,
    pub probe_time: f64,
    /// Set when the raw `p` fell outside `[0, 1]`.
    pub clamped: bool,
}

/// Returns `(p, clamped)`.
pub fn compute_p(inputs: &SteadyStateInputs) -> (f64, bool) {
    let x = inputs.buffer_bdp;
    let n = f64::from(inputs.bbr_flow_count);
    let q = inputs.buffer_packets as f64;
    let raw = 0.5 - 1.0 / (2.0 * x) - 4.0 * n / q;
    let clamped = !(0.0..=1.0).contains(&raw);
    (raw.clamp(0.0, 1.0), clamped)
}

/// Time spent in ProbeRTT over a window of `d` seconds with one episode of
/// `duration` every `interval`.
pub fn probe_time(d: f64, interval: f64, duration: f64) -> f64 {
    d / interval * duration
}

pub fn predict_bbr_fraction(inputs: &SteadyStateInputs) -> SteadyStatePrediction {
    let (p, clamped) = compute_p(inputs);
    let d = inputs.post_convergence_duration;
    let per_episode = inputs.probertt_duration + inputs.drain_time.unwrap_or(0.0);
    let probe = probe_time(d, inputs.probertt_interval, per_episode).min(d);
    let bbr = ((1.0 - p) * (d - probe) / d).clamp(0.0, 1.0);
    SteadyStatePrediction {
        loss_based_fraction: p,
        bbr_fraction: bbr,
        probe_time: probe,
        clamped,
    }
}

/// One `(buffer_bdp, bbr_fraction)` point per entry of `bdp_list`, which
/// must be non-empty and strictly ascending.
pub fn predict_curve(
    link: &LinkConfig,
    bbr_flow_count: u32,
    d: f64,
    bdp_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if bdp_list.is_empty() {
        return Err(Error::InvalidInput("buffer list is empty".into()));
    }
    if let Some(w) = bdp_list.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(format!(
            "buffer list must be strictly ascending ({} then {})",
            w[0], w[1]
        )));
    }
    bdp_list
        .iter()
        .map(|&x| {
            let inputs = SteadyStateInputs::from_link(&link.with_buffer_bdp(x), bbr_flow_count, d)?;
            Ok((x, predict_bbr_fraction(&inputs).bbr_fraction))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(x: f64, n: u32, q: u64, d: f64) -> SteadyStateInputs {
        SteadyStateInputs::new(x, n, q, d).unwrap()
    }

    #[test]
    fn compute_p_examples() {
        let (p, clamped) = compute_p(&inputs(1.0, 1, 33, 400.0));
        assert_eq!(p, 0.0);
        assert!(clamped);

        let (p, clamped) = compute_p(&inputs(8.0, 1, 267, 400.0));
        assert!((p - 0.422519).abs() < 1e-6, "{p}");
        assert!(!clamped);

        let (p, _) = compute_p(&inputs(64.0, 5, 2133, 400.0));
        assert!((p - 0.482811).abs() < 1e-6, "{p}");
    }

    #[test]
    fn probe_time_examples() {
        assert!((probe_time(400.0, 10.0, 0.2) - 8.0).abs() < 1e-12);
        assert!((probe_time(200.0, 10.0, 0.2) - 4.0).abs() < 1e-12);
        assert_eq!(probe_time(200.0, 10.0, 0.0), 0.0);
    }

    #[test]
    fn predict_examples() {
        let pred = predict_bbr_fraction(&inputs(8.0, 1, 267, 400.0));
        assert!((pred.bbr_fraction - 0.565931).abs() < 1e-5);
        assert!((pred.probe_time - 8.0).abs() < 1e-12);

        let pred = predict_bbr_fraction(&inputs(1.0, 1, 33, 200.0));
        assert!((pred.bbr_fraction - 0.98).abs() < 1e-12);
        assert!(pred.clamped);

        // p -> 0.5 as X, q -> inf; no ProbeRTT time leaves the fair split.
        let fair = inputs(1e12, 1, u64::MAX, 10.0)
            .with_probe_rtt(10.0, 0.0)
            .unwrap();
        let pred = predict_bbr_fraction(&fair);
        assert!((pred.bbr_fraction - 0.5).abs() < 1e-9);
    }

    #[test]
    fn drain_aware_lengthens_probe_time() {
        let base = inputs(8.0, 1, 267, 400.0);
        let drained = base.drain_aware(0.04).unwrap();
        assert!(predict_bbr_fraction(&drained).probe_time > predict_bbr_fraction(&base).probe_time);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SteadyStateInputs::new(0.0, 1, 1, 1.0).is_err());
        assert!(SteadyStateInputs::new(1.0, 0, 1, 1.0).is_err());
        assert!(SteadyStateInputs::new(1.0, 1, 0, 1.0).is_err());
        assert!(SteadyStateInputs::new(1.0, 1, 1, 0.0).is_err());
        assert!(inputs(1.0, 1, 1, 1.0).with_probe_rtt(1.0, 2.0).is_err());
    }

    #[test]
    fn curve_examples() {
        let link = LinkConfig::from_mbps_ms(10.0, 40.0, 1.0).unwrap();
        let sweep = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
        let curve = predict_curve(&link, 1, 400.0, &sweep).unwrap();
        assert_eq!(curve.len(), 7);
        // X=1 sits in the clamp region; from there on the curve strictly falls.
        for w in curve.windows(2) {
            assert!(w[1].1 < w[0].1, "{curve:?}");
        }

        let single = predict_curve(&link, 1, 400.0, &[4.0]).unwrap();
        assert_eq!(single.len(), 1);

        let fast = LinkConfig::from_mbps_ms(50.0, 30.0, 1.0).unwrap();
        let curve = predict_curve(&fast, 1, 400.0, &sweep).unwrap();
        assert!(curve[6].1 < curve[0].1);

        assert!(predict_curve(&link, 1, 400.0, &[]).is_err());
        assert!(predict_curve(&link, 1, 400.0, &[4.0, 2.0]).is_err());
        assert!(predict_curve(&link, 1, 400.0, &[2.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn outputs_in_unit_interval(x in 0.01f64..1000.0, n in 1u32..50, q in 1u64..100_000, d in 0.1f64..5000.0) {
            let pred = predict_bbr_fraction(&inputs(x, n, q, d));
            prop_assert!((0.0..=1.0).contains(&pred.bbr_fraction));
            prop_assert!((0.0..=1.0).contains(&pred.loss_based_fraction));
        }

        #[test]
        fn reconstructs_unity_when_unclamped(x in 2.0f64..1000.0, n in 1u32..5, q in 200u64..100_000, d in 20.0f64..5000.0) {
            let i = inputs(x, n, q, d);
            let pred = predict_bbr_fraction(&i);
            prop_assume!(!pred.clamped);
            let duty = (d - pred.probe_time) / d;
            prop_assert!((pred.bbr_fraction / duty + pred.loss_based_fraction - 1.0).abs() < 1e-12);
        }

        #[test]
        fn p_monotone_where_unclamped(x in 1.0f64..500.0, n in 1u32..10, q in 10u64..50_000, dx in 0.0f64..10.0, dq in 0u64..1000) {
            let (raw_p, c1) = compute_p(&inputs(x, n, q, 1.0));
            let (px, c2) = compute_p(&inputs(x + dx, n, q, 1.0));
            let (pq, c3) = compute_p(&inputs(x, n, q + dq, 1.0));
            let (pn, c4) = compute_p(&inputs(x, n + 1, q, 1.0));
            prop_assume!(!(c1 || c2 || c3 || c4));
            prop_assert!(px >= raw_p);
            prop_assert!(pq >= raw_p);
            prop_assert!(pn < raw_p);
        }
    }
}
