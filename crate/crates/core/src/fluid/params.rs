// SPDX-License-Identifier: Apache-2.0

use crate::config::LinkConfig;
use crate::error::{Error, Result};

/// Tunables of the fluid model.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidParams {
    /// Logistic steepness of mode and gain transitions, in units of the
    /// phase length being blended.
    pub sigmoid_steepness: f64,
    /// RK4 step, seconds.
    pub integrator_step: f64,
    /// Spacing of recorded samples, seconds.
    pub output_interval: f64,
    pub pacing_gain_cycle: [f64; 8],
    pub probertt_interval: f64,
    pub probertt_duration: f64,
    /// Rise rate of the bandwidth estimate toward the delivered rate, 1/s.
    pub btlbw_up_rate: f64,
    /// Decay rate of the bandwidth estimate toward the delivered rate, 1/s.
    pub btlbw_decay_rate: f64,
    /// Per-flow loss rate above which BBRv2/v3 cut `inflight_hi`.
    pub loss_threshold: f64,
    pub beta_inflight_hi: f64,
    /// Growth of `inflight_hi` over one probe-up phase, as a factor.
    pub inflight_hi_growth: f64,
    /// BBRv2 pause before probing again after an `inflight_hi` cut, seconds.
    pub bbr2_probe_wait: f64,
    /// Accept BBRv3 flows (modeled as BBRv2 without the probing pause).
    pub enable_v3: bool,
    /// Keep the full per-flow state at every output sample.
    pub record_states: bool,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            sigmoid_steepness: 20.0,
            integrator_step: 0.001,
            output_interval: 0.01,
            pacing_gain_cycle: [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            probertt_interval: 10.0,
            probertt_duration: 0.2,
            btlbw_up_rate: 25.0,
            btlbw_decay_rate: 2.5,
            loss_threshold: 0.02,
            beta_inflight_hi: 0.7,
            inflight_hi_growth: 1.25,
            bbr2_probe_wait: 2.0,
            enable_v3: false,
            record_states: true,
        }
    }
}

impl FluidParams {
    /// Defaults scaled to `link`: step `min(1 ms, rtt/100)` rounded down to
    /// divide the output interval, estimator rates tied to the base RTT.
    pub fn for_link(link: &LinkConfig) -> Self {
        let mut p = Self::default();
        p.integrator_step = Self::default_step(link.base_rtt, p.output_interval);
        p.btlbw_up_rate = 1.0 / link.base_rtt;
        p.btlbw_decay_rate = 1.0 / (10.0 * link.base_rtt);
        p
    }

    /// Largest step not above `min(1 ms, rtt/100)` that divides `output_interval`.
    pub fn default_step(base_rtt: f64, output_interval: f64) -> f64 {
        let cap = (base_rtt / 100.0).min(1e-3);
        output_interval / (output_interval / cap).ceil()
    }

    pub fn validated(self) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.integrator_step) {
            return bad("integrator_step must be positive");
        }
        if !finite_pos(self.output_interval) || self.output_interval < self.integrator_step {
            return bad("output_interval must be at least integrator_step");
        }
        if !finite_pos(self.sigmoid_steepness) {
            return bad("sigmoid_steepness must be positive");
        }
        if !self.pacing_gain_cycle.iter().all(|&g| finite_pos(g)) {
            return bad("pacing gains must be positive");
        }
        if !(finite_pos(self.probertt_duration) && self.probertt_duration < self.probertt_interval)
        {
            return bad("need 0 < probertt_duration < probertt_interval");
        }
        if !(finite_pos(self.btlbw_up_rate) && finite_pos(self.btlbw_decay_rate)) {
            return bad("btlbw relaxation rates must be positive");
        }
        if !(self.loss_threshold > 0.0 && self.loss_threshold < 1.0) {
            return bad("loss_threshold must be in (0, 1)");
        }
        if !(self.beta_inflight_hi > 0.0 && self.beta_inflight_hi < 1.0) {
            return bad("beta_inflight_hi must be in (0, 1)");
        }
        if !(self.inflight_hi_growth >= 1.0 && self.inflight_hi_growth.is_finite()) {
            return bad("inflight_hi_growth must be at least 1");
        }
        if !(self.bbr2_probe_wait >= 0.0 && self.bbr2_probe_wait.is_finite()) {
            return bad("bbr2_probe_wait must be non-negative");
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_divides_output_interval() {
        let dt = FluidParams::default_step(0.03, 0.01);
        assert!(dt <= 3e-4);
        let n = 0.01 / dt;
        assert!((n - n.round()).abs() < 1e-9);
        assert_eq!(FluidParams::default_step(0.2, 0.01), 0.001);
    }

    #[test]
    fn rejects_bad_values() {
        let p = FluidParams {
            beta_inflight_hi: 1.0,
            ..FluidParams::default()
        };
        assert!(p.validated().is_err());
        let p = FluidParams {
            probertt_duration: 10.0,
            ..FluidParams::default()
        };
        assert!(p.validated().is_err());
        assert!(FluidParams::default().validated().is_ok());
    }
}
