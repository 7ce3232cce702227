// SPDX-License-Identifier: Apache-2.0

//! Scenario description shared by every engine.
//!
//! Units are SI throughout: capacities in bits per second, times in seconds,
//! windows and buffers in bytes unless a name says otherwise.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default MTU used for data packets.
pub const DEFAULT_MTU: u32 = 1500;

/// Smallest MTU any IPv4 host must accept.
pub const MIN_MTU: u32 = 576;

/// Socket-buffer analog: 64 MiB keeps deep-buffer flows from going
/// receiver-window-limited.
pub const DEFAULT_MAX_WINDOW: u64 = 64 * 1024 * 1024;

/// The single shared bottleneck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Bottleneck service rate, bits per second.
    pub capacity: f64,
    /// Sum of the fixed one-way delays around the loop, seconds.
    pub base_rtt: f64,
    /// Buffer size as a multiple of the bandwidth-delay product.
    pub buffer_bdp: f64,
    pub mtu: u32,
}

impl LinkConfig {
    pub fn new(capacity: f64, base_rtt: f64, buffer_bdp: f64, mtu: u32) -> Result<Self> {
        let link = Self {
            capacity,
            base_rtt,
            buffer_bdp,
            mtu,
        };
        let violations = link.violations();
        if violations.is_empty() {
            Ok(link)
        } else {
            Err(Error::InvalidScenario(violations))
        }
    }

    /// Convenience constructor in the units experiments are usually quoted in.
    pub fn from_mbps_ms(capacity_mbps: f64, base_rtt_ms: f64, buffer_bdp: f64) -> Result<Self> {
        Self::new(capacity_mbps * 1e6, base_rtt_ms * 1e-3, buffer_bdp, DEFAULT_MTU)
    }

    pub fn with_buffer_bdp(self, buffer_bdp: f64) -> Self {
        Self { buffer_bdp, ..self }
    }

    pub fn bdp_bytes(&self) -> f64 {
        self.capacity / 8.0 * self.base_rtt
    }

    /// Bandwidth-delay product in MTU-sized packets.
    pub fn bdp_packets(&self) -> f64 {
        bdp_packets(self)
    }

    /// Droptail buffer size in whole packets.
    pub fn buffer_packets(&self) -> u64 {
        buffer_packets(self)
    }

    pub fn buffer_bytes(&self) -> u64 {
        self.buffer_packets() * u64::from(self.mtu)
    }

    /// Time to serialize one MTU onto the bottleneck.
    pub fn packet_time(&self) -> f64 {
        f64::from(self.mtu) * 8.0 / self.capacity
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            v.push(format!("link.capacity must be positive, got {}", self.capacity));
        }
        if !(self.base_rtt > 0.0 && self.base_rtt.is_finite()) {
            v.push(format!("link.base_rtt must be positive, got {}", self.base_rtt));
        }
        if !(self.buffer_bdp > 0.0 && self.buffer_bdp.is_finite()) {
            v.push(format!("link.buffer_bdp must be positive, got {}", self.buffer_bdp));
        }
        if self.mtu < MIN_MTU {
            v.push(format!("link.mtu must be at least {MIN_MTU}, got {}", self.mtu));
        }
        v
    }
}

/// `capacity/8 × base_rtt / mtu`.
pub fn bdp_packets(link: &LinkConfig) -> f64 {
    link.bdp_bytes() / f64::from(link.mtu)
}

/// `round(buffer_bdp × bdp_packets)`, never below one packet.
pub fn buffer_packets(link: &LinkConfig) -> u64 {
    let raw = (link.buffer_bdp * bdp_packets(link)).round();
    if raw.is_finite() && raw >= 1.0 {
        raw as u64
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CcaKind {
    Reno,
    Cubic,
    BbrV1,
    BbrV2,
    BbrV3,
}

impl CcaKind {
    pub const ALL: [CcaKind; 5] = [
        CcaKind::Reno,
        CcaKind::Cubic,
        CcaKind::BbrV1,
        CcaKind::BbrV2,
        CcaKind::BbrV3,
    ];

    pub fn is_bbr(self) -> bool {
        matches!(self, CcaKind::BbrV1 | CcaKind::BbrV2 | CcaKind::BbrV3)
    }

    pub fn name(self) -> &'static str {
        match self {
            CcaKind::Reno => "reno",
            CcaKind::Cubic => "cubic",
            CcaKind::BbrV1 => "bbrv1",
            CcaKind::BbrV2 => "bbrv2",
            CcaKind::BbrV3 => "bbrv3",
        }
    }
}

impl fmt::Display for CcaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CcaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reno" | "newreno" => Ok(CcaKind::Reno),
            "cubic" => Ok(CcaKind::Cubic),
            "bbr" | "bbr1" | "bbrv1" => Ok(CcaKind::BbrV1),
            "bbr2" | "bbrv2" => Ok(CcaKind::BbrV2),
            "bbr3" | "bbrv3" => Ok(CcaKind::BbrV3),
            other => Err(Error::InvalidInput(format!("unknown congestion control '{other}'"))),
        }
    }
}

/// Extra one-way delay a sender adds in front of the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtraDelay {
    Fixed(f64),
    /// Drawn once per trial from `U[lo, hi]` using the trial's RNG stream.
    Uniform { lo: f64, hi: f64 },
}

impl Default for ExtraDelay {
    fn default() -> Self {
        ExtraDelay::Fixed(0.0)
    }
}

impl ExtraDelay {
    /// Expected value, used where a single number is needed without an RNG.
    pub fn mean(&self) -> f64 {
        match *self {
            ExtraDelay::Fixed(d) => d,
            ExtraDelay::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: u32,
    pub cca: CcaKind,
    pub sender_extra_delay: ExtraDelay,
    pub start_time: f64,
    /// Receiver/socket-buffer limit on outstanding bytes.
    pub max_window: u64,
}

impl FlowSpec {
    pub fn new(id: u32, cca: CcaKind) -> Self {
        Self {
            id,
            cca,
            sender_extra_delay: ExtraDelay::default(),
            start_time: 0.0,
            max_window: DEFAULT_MAX_WINDOW,
        }
    }

    pub fn with_start(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    pub fn with_extra_delay(mut self, delay: ExtraDelay) -> Self {
        self.sender_extra_delay = delay;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub link: LinkConfig,
    pub flows: Vec<FlowSpec>,
    /// Total simulated time, seconds.
    pub duration: f64,
    /// Length of the suffix of the run that metrics are computed over.
    pub analysis_window: f64,
    pub trials: u32,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn analysis_start(&self) -> f64 {
        self.duration - self.analysis_window
    }

    pub fn bbr_flow_count(&self) -> usize {
        self.flows.iter().filter(|f| f.cca.is_bbr()).count()
    }

    pub fn with_buffer_bdp(&self, buffer_bdp: f64) -> Self {
        Self {
            link: self.link.with_buffer_bdp(buffer_bdp),
            ..self.clone()
        }
    }

    pub fn validated(self) -> Result<Self> {
        validate(&self).map(|()| self).map_err(Error::InvalidScenario)
    }

    /// Per-flow extra one-way delay for `trial`, in flow order.
    ///
    /// Each flow draws from its own ChaCha stream keyed by `(seed, trial)`
    /// and its id, so adding or removing other flows never changes a flow's
    /// draw.
    pub fn extra_delays(&self, trial: u32) -> Vec<f64> {
        self.flows
            .iter()
            .map(|f| match f.sender_extra_delay {
                ExtraDelay::Fixed(d) => d,
                ExtraDelay::Uniform { lo, hi } => {
                    let mut rng = flow_rng(self.seed, trial, f.id);
                    if hi > lo {
                        rng.gen_range(lo..=hi)
                    } else {
                        lo
                    }
                }
            })
            .collect()
    }
}

/// The RNG stream owned by one flow in one trial.
pub fn flow_rng(seed: u64, trial: u32, flow_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(trial).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(u64::from(flow_id));
    rng
}

/// Collects every invariant violation of `scenario`; never panics.
pub fn validate(scenario: &ScenarioConfig) -> std::result::Result<(), Vec<String>> {
    let mut v = scenario.link.violations();

    if !(scenario.duration > 0.0 && scenario.duration.is_finite()) {
        v.push(format!("duration must be positive, got {}", scenario.duration));
    }
    if !(scenario.analysis_window > 0.0 && scenario.analysis_window.is_finite()) {
        v.push(format!(
            "analysis_window must be positive, got {}",
            scenario.analysis_window
        ));
    } else if scenario.analysis_window > scenario.duration {
        v.push(format!(
            "analysis_window ({}) exceeds duration ({})",
            scenario.analysis_window, scenario.duration
        ));
    }
    if scenario.trials < 1 {
        v.push("trials must be at least 1".to_string());
    }

    let mut seen = HashSet::new();
    for flow in &scenario.flows {
        if !seen.insert(flow.id) {
            v.push(format!("duplicate flow id {}", flow.id));
        }
        if !(flow.start_time >= 0.0 && flow.start_time.is_finite()) {
            v.push(format!("flow {}: start_time must be >= 0", flow.id));
        }
        if flow.max_window == 0 {
            v.push(format!("flow {}: max_window must be positive", flow.id));
        }
        match flow.sender_extra_delay {
            ExtraDelay::Fixed(d) if !(d >= 0.0 && d.is_finite()) => {
                v.push(format!("flow {}: extra delay must be >= 0", flow.id));
            }
            ExtraDelay::Uniform { lo, hi } if !(lo >= 0.0 && hi >= lo && hi.is_finite()) => {
                v.push(format!("flow {}: extra delay range must satisfy 0 <= lo <= hi", flow.id));
            }
            _ => {}
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(cap_mbps: f64, rtt_ms: f64, bdp: f64) -> LinkConfig {
        LinkConfig::from_mbps_ms(cap_mbps, rtt_ms, bdp).unwrap()
    }

    fn scenario() -> ScenarioConfig {
        ScenarioConfig {
            link: link(10.0, 40.0, 1.0),
            flows: vec![FlowSpec::new(0, CcaKind::BbrV1), FlowSpec::new(1, CcaKind::Cubic)],
            duration: 1000.0,
            analysis_window: 400.0,
            trials: 3,
            seed: 1,
        }
    }

    #[test]
    fn bdp_packets_examples() {
        assert!((bdp_packets(&link(10.0, 40.0, 1.0)) - 100.0 / 3.0).abs() < 1e-9);
        assert!((bdp_packets(&link(50.0, 30.0, 1.0)) - 125.0).abs() < 1e-9);
        let one = LinkConfig::new(12e3, 1.0, 1.0, 1500).unwrap();
        assert!((bdp_packets(&one) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn buffer_packets_examples() {
        assert_eq!(buffer_packets(&link(10.0, 40.0, 8.0)), 267);
        assert_eq!(buffer_packets(&link(10.0, 40.0, 64.0)), 2133);
        assert_eq!(buffer_packets(&link(10.0, 40.0, 0.001)), 1);
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&scenario()).is_ok());

        let mut s = scenario();
        s.analysis_window = 2000.0;
        let v = validate(&s).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("analysis_window"));

        let mut s = scenario();
        s.flows = vec![FlowSpec::new(3, CcaKind::Reno), FlowSpec::new(3, CcaKind::Cubic)];
        let v = validate(&s).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("duplicate flow id 3"));
    }

    #[test]
    fn validate_reports_every_violation() {
        let mut s = scenario();
        s.link.capacity = -1.0;
        s.trials = 0;
        s.duration = f64::NAN;
        let v = validate(&s).unwrap_err();
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn cca_names_round_trip() {
        for k in CcaKind::ALL {
            assert_eq!(k.name().parse::<CcaKind>().unwrap(), k);
        }
        assert!("vegas".parse::<CcaKind>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn buffer_monotone_in_bdp(cap in 1e5f64..1e9, rtt in 1e-3f64..0.5, a in 0.01f64..100.0, b in 0.01f64..100.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let l = LinkConfig::new(cap, rtt, lo, 1500).unwrap();
                prop_assert!(buffer_packets(&l) <= buffer_packets(&l.with_buffer_bdp(hi)));
            }

            #[test]
            fn buffer_monotone_in_capacity(c1 in 1e5f64..1e9, c2 in 1e5f64..1e9, rtt in 1e-3f64..0.5, x in 0.01f64..100.0) {
                let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
                let a = LinkConfig::new(lo, rtt, x, 1500).unwrap();
                let b = LinkConfig::new(hi, rtt, x, 1500).unwrap();
                prop_assert!(buffer_packets(&a) <= buffer_packets(&b));
            }

            #[test]
            fn bytes_packets_round_trip_loses_under_one_mtu(bytes in 0u64..10_000_000_000, mtu in 576u32..9000) {
                let packets = bytes / u64::from(mtu);
                let back = packets * u64::from(mtu);
                prop_assert!(bytes - back < u64::from(mtu));
            }

            #[test]
            fn validate_is_total(cap in proptest::num::f64::ANY, rtt in proptest::num::f64::ANY,
                                 dur in proptest::num::f64::ANY, win in proptest::num::f64::ANY,
                                 trials in 0u32..3, mtu in 0u32..2000) {
                let s = ScenarioConfig {
                    link: LinkConfig { capacity: cap, base_rtt: rtt, buffer_bdp: 1.0, mtu },
                    flows: vec![FlowSpec::new(0, CcaKind::Reno)],
                    duration: dur,
                    analysis_window: win,
                    trials,
                    seed: 0,
                };
                let _ = validate(&s);
            }
        }
    }
}
