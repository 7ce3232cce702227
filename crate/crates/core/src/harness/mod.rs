// SPDX-License-Identifier: Apache-2.0

//! Presets, sweeps over buffer × engine × trial, CSV persistence and
//! reports with static plots.
//!
//! ```no_run
//! use bbrlab_core::harness::{self, Engine};
//!
//! let mut m = harness::preset("ware-40ms-10mbps").unwrap();
//! m.engines = vec![Engine::SteadyState, Engine::Packetsim];
//! m.out_dir = "out".into();
//! let outcome = harness::execute(&m).unwrap();
//! assert!(outcome.failures.is_empty());
//! harness::report(&m.out_dir).unwrap();
//! ```

mod convergence;
mod execute;
mod matrix;
mod preset;
mod report;
pub mod svg;

pub use convergence::convergence_time;
pub use execute::{
    execute, read_summary, slug, write_summary, write_timeseries, CellFailure, RunRecord, SweepOutcome,
    ARTIFACT_VERSION, SUMMARY_FILE, SUMMARY_HEADER, TIMESERIES_HEADER,
};
pub use matrix::{Engine, ExperimentMatrix, FlowMix, DEFAULT_BUFFERS, FLUID_DURATION, FLUID_WINDOW};
pub use preset::{analysis_window, from_scenario, nominal_duration, preset, PRESETS};
pub use report::{report, PresetScore, Report, REPORT_FILE};
