use std::path::PathBuf;

use thiserror::Error;

use crate::expr::ExprError;

/// Errors of the driver.
#[derive(Debug, Error)]
pub enum SimError {
    /// Malformed or inconsistent configuration.
    #[error("config: {0}")]
    Config(String),
    /// Numerical failure, with the step index when it happened mid-run.
    #[error("step {step}: {source}")]
    Step {
        /// Step at which the failure occurred.
        step: u64,
        /// Underlying error.
        source: npns_core::Error,
    },
    /// Numerical failure outside the time loop.
    #[error(transparent)]
    Core(#[from] npns_core::Error),
    /// Filesystem failure.
    #[error("{path}: {source}")]
    Io {
        /// File being accessed.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// CSV encoding or decoding failure.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// Corrupt or mismatched checkpoint.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    /// Newton iteration of the 1D oracle failed.
    #[error("oracle: {message} (residual trace {trace:?})")]
    Oracle {
        /// What went wrong.
        message: String,
        /// Residual norm per Newton iteration.
        trace: Vec<f64>,
    },
    /// Unknown manufactured-solution case.
    #[error("unknown case `{0}` (expected poisson, np, stokes or coupled)")]
    UnknownCase(String),
}

impl SimError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Config(_) => "config",
            SimError::Step { .. } | SimError::Core(_) => "numerics",
            SimError::Io { .. } => "io",
            SimError::Csv(_) => "csv",
            SimError::Checkpoint(_) => "checkpoint",
            SimError::Oracle { .. } => "oracle",
            SimError::UnknownCase(_) => "unknown_case",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> SimError {
        let path = path.into();
        move |source| SimError::Io { path, source }
    }

    pub(crate) fn at_step(step: u64) -> impl FnOnce(npns_core::Error) -> SimError {
        move |source| SimError::Step { step, source }
    }
}

impl From<ExprError> for SimError {
    fn from(e: ExprError) -> Self {
        SimError::Config(e.0)
    }
}

/// Result alias of the driver.
pub type Result<T, E = SimError> = std::result::Result<T, E>;
