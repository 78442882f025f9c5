//! Numerical kernels for ionic electrodiffusion in an incompressible fluid.
//!
//! The crate discretizes the Nernst-Planck equations for `m` ionic species,
//! the Poisson equation for the electric potential, and the Stokes or
//! Navier-Stokes equations for the fluid on an axis-aligned box. Scalars are
//! cell-centered, velocities live on a MAC staggered grid, and Dirichlet data
//! enter through ghost cells.
//!
//! Alongside the time stepper the crate evaluates the energy functionals,
//! dissipation terms and regularity monitors used to reason about global
//! smoothness of the system, and audits their balance laws on recorded
//! histories.
//!
//! The crate is `no_std` and only needs `alloc`. All file formats, the
//! configuration language and the driver loop live in the companion `npns`
//! crate.
#![cfg_attr(not(test), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod audit;
pub mod boundary;
pub mod diagnostics;
mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod nernst_planck;
pub mod params;
pub mod poisson;
pub mod state;
pub mod stencil;
pub mod stepper;

pub use boundary::{extend_boundary_data, BoundaryData};
pub use error::{Error, Result};
pub use field::{BoundaryTrace, CellField, FaceField};
pub use grid::{build_grid, Grid};
pub use params::{validate_params, FlowMode, ParamViolation, SimParams, Species};
pub use state::{charge_density, State};
pub use stepper::{Stepper, Tolerances};
