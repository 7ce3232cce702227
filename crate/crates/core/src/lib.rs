// SPDX-License-Identifier: Apache-2.0

//! Models and simulation of BBR sharing a droptail bottleneck with
//! loss-based TCP.
//!
//! * [`steady_state`]: closed-form BBRv1 share from the in-flight cap.
//! * [`fluid`]: ODE model of BBRv1/v2 (and a v3 variant) against fluid
//!   Reno/CUBIC, integrated with fixed-step RK4.
//! * [`packetsim`]: deterministic packet-level dumbbell simulator with
//!   Reno, CUBIC and BBRv1/v2/v3 senders.
//! * [`metrics`]: fairness, loss, utilization, occupancy and model scoring.
//! * [`harness`]: presets, experiment sweeps, CSV persistence and reports.

pub mod config;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod metrics;
pub mod packetsim;
pub mod scenario_file;
pub mod steady_state;
pub mod trace;

pub use config::{
    bdp_packets, buffer_packets, validate, CcaKind, ExtraDelay, FlowSpec, LinkConfig,
    ScenarioConfig,
};
pub use error::{Error, Result};
pub use fluid::{FluidParams, FluidRun};
pub use metrics::{FractionMode, MetricsSummary, ModelScore};
pub use packetsim::{SimOptions, SimTrace};
pub use steady_state::{SteadyStateInputs, SteadyStatePrediction};
