// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::config::CcaKind;

/// Errors raised by the models, the simulator and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scenario file line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{engine} does not support {cca}")]
    UnsupportedCca { engine: &'static str, cca: CcaKind },

    #[error("fluid model diverged at t={time:.6}s ({what})")]
    Divergence { time: f64, what: String },

    #[error("event queue drained at t={time:.6}s with {active} active flows")]
    Livelock { time: f64, active: usize },

    #[error("unknown preset '{name}', expected one of: {}", .valid.join(", "))]
    UnknownPreset { name: String, valid: Vec<&'static str> },

    /// `row` is the 1-based line, or 0 for the file as a whole.
    #[error("{path}{}: {msg}", if *.row == 0 { String::new() } else { format!(" row {row}") })]
    Csv {
        path: String,
        row: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
