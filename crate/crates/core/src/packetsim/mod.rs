// SPDX-License-Identifier: Apache-2.0

//! Deterministic packet-level simulation of a single-bottleneck dumbbell.
//!
//! ```no_run
//! use bbrlab_core::{CcaKind, FlowSpec, LinkConfig, ScenarioConfig, packetsim};
//!
//! let scenario = ScenarioConfig {
//!     link: LinkConfig::from_mbps_ms(10.0, 40.0, 1.0).unwrap(),
//!     flows: vec![FlowSpec::new(0, CcaKind::BbrV1), FlowSpec::new(1, CcaKind::Cubic)],
//!     duration: 60.0,
//!     analysis_window: 30.0,
//!     trials: 1,
//!     seed: 1,
//! };
//! let trace = packetsim::run(&scenario, 0).unwrap();
//! assert!(trace.violations.is_empty());
//! ```

pub mod cca;
pub mod event;
pub mod queue;
pub mod sender;
mod sim;

use std::io::Write;

pub use crate::trace::SimTrace;
use crate::config::{ScenarioConfig, DEFAULT_MTU};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Spacing of trace samples, seconds.
    pub sample_interval: f64,
    /// Receiver sends one ACK per this many data packets.
    pub ack_every: u32,
    /// Longest an ACK is held back when `ack_every > 1`.
    pub delayed_ack_timeout: f64,
    pub cca: cca::CcaParams,
    /// Record every controller state transition in the trace.
    pub record_states: bool,
    /// Check conservation and window invariants and report violations.
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sample_interval: 0.1,
            ack_every: 1,
            delayed_ack_timeout: 0.04,
            cca: cca::CcaParams::new(DEFAULT_MTU),
            record_states: false,
            check_invariants: true,
        }
    }
}

/// Runs `scenario` for trial `trial` with default options.
pub fn run(scenario: &ScenarioConfig, trial: u32) -> Result<SimTrace> {
    run_with(scenario, trial, &SimOptions::default())
}

pub fn run_with(scenario: &ScenarioConfig, trial: u32, opts: &SimOptions) -> Result<SimTrace> {
    check(scenario, opts)?;
    sim::Simulation::new(scenario, trial, opts, None).run()
}

/// Like [`run_with`], writing one line per dispatched event to `log`:
/// time, flow id (-1 for samples), event type, queue occupancy in bytes.
pub fn run_logged(
    scenario: &ScenarioConfig,
    trial: u32,
    opts: &SimOptions,
    log: &mut dyn Write,
) -> Result<SimTrace> {
    check(scenario, opts)?;
    sim::Simulation::new(scenario, trial, opts, Some(log)).run()
}

fn check(scenario: &ScenarioConfig, opts: &SimOptions) -> Result<()> {
    crate::config::validate(scenario).map_err(Error::InvalidScenario)?;
    if !(opts.sample_interval > 0.0 && opts.sample_interval.is_finite()) {
        return Err(Error::InvalidInput("sample_interval must be positive".into()));
    }
    if !(opts.delayed_ack_timeout > 0.0) {
        return Err(Error::InvalidInput("delayed_ack_timeout must be positive".into()));
    }
    Ok(())
}
