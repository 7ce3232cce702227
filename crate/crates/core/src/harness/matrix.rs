// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::config::{CcaKind, ExtraDelay, FlowSpec, ScenarioConfig};
use crate::error::{Error, Result};

/// Default buffer sweep, in BDP.
pub const DEFAULT_BUFFERS: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// Fluid runs are short regardless of the packet-level duration.
pub const FLUID_DURATION: f64 = 9.0;
pub const FLUID_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    Fluid,
    Packetsim,
    SteadyState,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::SteadyState, Engine::Fluid, Engine::Packetsim];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Fluid => "fluid",
            Engine::Packetsim => "packetsim",
            Engine::SteadyState => "steady_state",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "fluid" => Ok(Engine::Fluid),
            "packetsim" | "sim" => Ok(Engine::Packetsim),
            "steady_state" | "steady" => Ok(Engine::SteadyState),
            other => Err(Error::InvalidInput(format!(
                "unknown engine '{other}', expected steady_state, fluid or packetsim"
            ))),
        }
    }
}

/// Flow mix such as `5xbbrv1+5xcubic`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowMix {
    pub groups: Vec<(u32, CcaKind)>,
}

impl FlowMix {
    pub fn versus(bbr: CcaKind, n: u32, other: CcaKind, m: u32) -> Self {
        Self {
            groups: vec![(n, bbr), (m, other)],
        }
    }

    pub fn flow_count(&self) -> u32 {
        self.groups.iter().map(|g| g.0).sum()
    }

    pub fn bbr_count(&self) -> u32 {
        self.groups.iter().filter(|g| g.1.is_bbr()).map(|g| g.0).sum()
    }

    pub fn contains(&self, kind: CcaKind) -> bool {
        self.groups.iter().any(|g| g.1 == kind && g.0 > 0)
    }

    pub fn has_loss_based(&self) -> bool {
        self.groups.iter().any(|g| !g.1.is_bbr() && g.0 > 0)
    }

    /// Flows in group order with ids from zero.
    pub fn flows(&self, extra_delay: ExtraDelay) -> Vec<FlowSpec> {
        self.groups
            .iter()
            .flat_map(|&(n, kind)| std::iter::repeat(kind).take(n as usize))
            .zip(0..)
            .map(|(kind, id)| FlowSpec::new(id, kind).with_extra_delay(extra_delay))
            .collect()
    }
}

impl fmt::Display for FlowMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, kind)) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{n}x{kind}")?;
        }
        Ok(())
    }
}

impl FromStr for FlowMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(format!("flow mix '{s}': {m}"));
        let mut groups = Vec::new();
        for part in s.split(['+', ',']) {
            let part = part.trim();
            if part.is_empty() {
                return Err(bad("empty group".into()));
            }
            let (n, kind) = match part.split_once(['x', '*']) {
                Some((n, k)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => {
                    (n.parse::<u32>().map_err(|e| bad(e.to_string()))?, k)
                }
                _ => (1, part),
            };
            if n == 0 {
                return Err(bad("group count must be positive".into()));
            }
            groups.push((n, kind.parse::<CcaKind>().map_err(|e| bad(e.to_string()))?));
        }
        Ok(Self { groups })
    }
}

/// One sweep: every buffer × engine × trial cell of a preset and flow mix.
#[derive(Debug, Clone)]
pub struct ExperimentMatrix {
    pub preset: String,
    /// Packet-level scenario at nominal (unscaled) duration. Its flows
    /// follow `mix`; its buffer is overridden per cell.
    pub template: ScenarioConfig,
    pub mix: FlowMix,
    /// The preset's own mix; rows of other mixes carry the mix in their label.
    pub default_mix: FlowMix,
    pub sender_delay: ExtraDelay,
    pub buffers: Vec<f64>,
    pub engines: Vec<Engine>,
    /// Multiplies the packet-level duration and analysis window.
    pub time_scale: f64,
    pub jobs: usize,
    pub out_dir: PathBuf,
    /// Let the fluid engine model BBRv3 flows.
    pub fluid_v3: bool,
    /// Throughput-share slope (per second) below which a packet-level run
    /// counts as converged; the analysis window then starts there. Off when
    /// `None`.
    pub convergence_slope: Option<f64>,
}

impl ExperimentMatrix {
    /// Label written to the `preset` column.
    pub fn label(&self) -> String {
        if self.mix == self.default_mix {
            self.preset.clone()
        } else {
            format!("{}:{}", self.preset, self.mix)
        }
    }

    /// Replaces the flow mix, rebuilding the template's flows.
    pub fn with_mix(mut self, mix: FlowMix) -> Self {
        self.template.flows = mix.flows(self.sender_delay);
        if let Some(w) = super::preset::analysis_window(&self.preset, &mix) {
            self.template.analysis_window = w;
        }
        self.mix = mix;
        self
    }

    /// Engines that can run this mix.
    pub fn applicable_engines(&self) -> Vec<Engine> {
        Engine::ALL
            .into_iter()
            .filter(|&e| self.engine_problem(e).is_none())
            .collect()
    }

    fn engine_problem(&self, engine: Engine) -> Option<String> {
        match engine {
            Engine::SteadyState if self.mix.bbr_count() == 0 || !self.mix.has_loss_based() => {
                Some("steady_state needs both BBR and loss-based flows".into())
            }
            Engine::Fluid if self.mix.contains(CcaKind::BbrV3) && !self.fluid_v3 => {
                Some("fluid models bbrv3 only when the v3 variant is enabled".into())
            }
            _ => None,
        }
    }

    /// Packet-level scenario for one buffer size, time-scaled.
    pub fn packet_scenario(&self, buffer_bdp: f64) -> ScenarioConfig {
        let mut s = self.template.with_buffer_bdp(buffer_bdp);
        s.duration *= self.time_scale;
        s.analysis_window *= self.time_scale;
        s
    }

    pub fn fluid_scenario(&self, buffer_bdp: f64) -> ScenarioConfig {
        let mut s = self.template.with_buffer_bdp(buffer_bdp);
        s.duration = FLUID_DURATION;
        s.analysis_window = FLUID_WINDOW;
        s
    }

    pub fn validated(self) -> Result<Self> {
        let mut v = Vec::new();
        if self.buffers.is_empty() {
            v.push("buffer sweep is empty".to_string());
        }
        if let Some(b) = self.buffers.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            v.push(format!("buffer sizes must be positive, got {b}"));
        }
        let mut sorted = self.buffers.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            v.push("buffer sizes must be distinct".into());
        }
        if self.engines.is_empty() {
            v.push("no engine selected".into());
        }
        for &e in &self.engines {
            if let Some(p) = self.engine_problem(e) {
                v.push(p);
            }
        }
        if self.mix.flow_count() == 0 {
            v.push("flow mix is empty".into());
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            v.push(format!("time scale must be positive, got {}", self.time_scale));
        }
        if self.jobs == 0 {
            v.push("jobs must be at least 1".into());
        }
        if let Some(s) = self.convergence_slope {
            if !(s.is_finite() && s > 0.0) {
                v.push(format!("convergence slope must be positive, got {s}"));
            }
        }
        if let Err(mut errs) = crate::config::validate(&self.packet_scenario(sorted.first().copied().unwrap_or(1.0))) {
            v.append(&mut errs);
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidScenario(v))
        }
    }
}
