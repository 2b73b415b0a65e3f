//! Scenario sweeps, result files and the `cheapctl` command line.
//!
//! - [`scenario`]: flat key-value scenario documents.
//! - [`sweep`]: deterministic parallel runs over `(system, ε, T, x₀)` grids.
//! - [`output`]: versioned CSV results and phase-diagram matrices.
//! - [`verify`]: invariant suites shared by the CLI and the acceptance tests.
//! - [`cli`]: argument parsing and subcommand dispatch.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod output;
pub mod scenario;
pub mod sweep;
pub mod verify;

use thiserror::Error;

pub use scenario::Scenario;
pub use sweep::{run_sweep, SweepResult, SweepRow, SweepRun};

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] cheapctl_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed result file: {0}")]
    Format(String),
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config { .. }
                | HarnessError::Core(
                    cheapctl_core::Error::InvalidConfig(_)
                        | cheapctl_core::Error::NonPositiveEpsilon(_)
                        | cheapctl_core::Error::InvalidHorizon(_)
                        | cheapctl_core::Error::InvalidDimension { .. }
                )
        )
    }
}
