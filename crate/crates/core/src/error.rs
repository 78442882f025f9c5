use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::params::ParamViolation;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Grid construction was rejected.
    InvalidGrid(String),
    /// Simulation parameters violate one or more invariants.
    InvalidParams(Vec<ParamViolation>),
    /// A boundary trace that must be strictly positive was not.
    NonPositiveBoundary {
        /// Species index.
        species: usize,
        /// Offending sample.
        value: f64,
    },
    /// An iterative solve hit its iteration cap.
    SolverDiverged {
        /// Iterations performed.
        iterations: usize,
        /// Final residual norm, relative to the requested scale.
        residual: f64,
    },
    /// The number of concentration fields does not match the species table.
    SpeciesMismatch {
        /// Species in the table.
        expected: usize,
        /// Fields supplied.
        found: usize,
    },
    /// A concentration below the rounding slack was encountered.
    NegativeConcentration {
        /// Species index.
        species: usize,
        /// Linear cell index.
        cell: usize,
        /// Offending value.
        value: f64,
    },
    /// The requested time step exceeds a stability bound.
    TimeStepTooLarge {
        /// Requested step.
        dt: f64,
        /// Largest admissible step.
        limit: f64,
    },
    /// An operation needs a mode or species layout that is not active.
    Scope(&'static str),
    /// Field lengths disagree with the grid.
    ShapeMismatch(&'static str),
    /// A history is not sorted in time.
    UnsortedHistory {
        /// First record out of order.
        index: usize,
    },
    /// A history has gaps where consecutive steps are required.
    MissingSnapshots {
        /// First record whose successor is missing.
        index: usize,
    },
    /// A non-finite value appeared in a field.
    NonFinite(&'static str),
}

/// Result alias for this crate.
pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::InvalidParams(v) => {
                write!(f, "invalid parameters:")?;
                for p in v {
                    write!(f, " {p};")?;
                }
                Ok(())
            }
            Error::NonPositiveBoundary { species, value } => write!(
                f,
                "boundary concentration of species {species} must be positive, found {value}"
            ),
            Error::SolverDiverged {
                iterations,
                residual,
            } => write!(
                f,
                "iterative solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::SpeciesMismatch { expected, found } => write!(
                f,
                "expected {expected} concentration fields, found {found}"
            ),
            Error::NegativeConcentration {
                species,
                cell,
                value,
            } => write!(
                f,
                "negative concentration {value:e} for species {species} in cell {cell}"
            ),
            Error::TimeStepTooLarge { dt, limit } => {
                write!(f, "time step {dt:e} exceeds stability limit {limit:e}")
            }
            Error::Scope(msg) => write!(f, "{msg}"),
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::UnsortedHistory { index } => {
                write!(f, "history is not sorted in time at record {index}")
            }
            Error::MissingSnapshots { index } => {
                write!(f, "history is missing the step after record {index}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for Error {}
