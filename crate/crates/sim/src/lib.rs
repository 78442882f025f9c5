//! Driver for the `npns-core` electrodiffusion kernels: configuration,
//! the time loop with CSV output and checkpoints, manufactured-solution
//! convergence studies, an independent 1D steady-state solver and
//! parameter sweeps.

pub mod audit;
pub mod checkpoint;
pub mod config;
mod error;
pub mod expr;
pub mod mms;
pub mod oracle1d;
pub mod run;
pub mod sweep;

pub use config::{load_config, parse_config_with, RunSpec};
pub use error::{Result, SimError};
pub use run::{run_simulation, RunResult};
