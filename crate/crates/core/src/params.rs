//! Physical parameters and the species table.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// How the velocity field is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// Unsteady Stokes equations.
    Stokes,
    /// Incompressible Navier-Stokes equations.
    NavierStokes,
    /// Velocity held at zero.
    FrozenZeroVelocity,
}

impl FlowMode {
    /// Config spelling of the mode.
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowMode::Stokes => "stokes",
            FlowMode::NavierStokes => "navier_stokes",
            FlowMode::FrozenZeroVelocity => "frozen_zero_velocity",
        }
    }
}

/// One ionic species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Species {
    /// Signed valence `z_i`.
    pub valence: i32,
    /// Diffusivity `D_i`.
    pub diffusivity: f64,
}

/// Physical constants of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Permittivity `epsilon` (proportional to the squared Debye length).
    pub epsilon: f64,
    /// Kinematic viscosity `nu`.
    pub nu: f64,
    /// Coupling constant `K` between electric forcing and the fluid.
    pub coupling_k: f64,
    /// Species table.
    pub species: Vec<Species>,
    /// Velocity model.
    pub flow_mode: FlowMode,
    /// All diffusivities equal and all valences `+-1`.
    pub equal_diffusivity_mode: bool,
}

/// A violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamViolation {
    /// `epsilon <= 0`.
    NonPositiveEpsilon(f64),
    /// `nu <= 0`.
    NonPositiveViscosity(f64),
    /// `K <= 0`.
    NonPositiveCoupling(f64),
    /// The species table is empty.
    NoSpecies,
    /// `D_i <= 0`.
    NonPositiveDiffusivity {
        /// Species index.
        species: usize,
        /// Offending value.
        value: f64,
    },
    /// Equal-diffusivity mode with differing diffusivities.
    UnequalDiffusivities,
    /// Equal-diffusivity mode with a valence other than `+-1`.
    NonUnitValence {
        /// Species index.
        species: usize,
        /// Offending valence.
        valence: i32,
    },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamViolation::NonPositiveEpsilon(v) => write!(f, "epsilon must be positive (got {v})"),
            ParamViolation::NonPositiveViscosity(v) => write!(f, "viscosity must be positive (got {v})"),
            ParamViolation::NonPositiveCoupling(v) => {
                write!(f, "coupling constant must be positive (got {v})")
            }
            ParamViolation::NoSpecies => write!(f, "at least one species is required"),
            ParamViolation::NonPositiveDiffusivity { species, value } => write!(
                f,
                "diffusivity must be positive (species {species}, got {value})"
            ),
            ParamViolation::UnequalDiffusivities => write!(
                f,
                "equal-diffusivity mode requires D_1 = D_2 = ... = D_m > 0"
            ),
            ParamViolation::NonUnitValence { species, valence } => write!(
                f,
                "equal-diffusivity mode requires valences +1 or -1 (species {species} has {valence})"
            ),
        }
    }
}

/// Collects every violated invariant of `params`.
pub fn validate_params(params: &SimParams) -> core::result::Result<(), Vec<ParamViolation>> {
    let mut out = Vec::new();
    if !(params.epsilon > 0.0) {
        out.push(ParamViolation::NonPositiveEpsilon(params.epsilon));
    }
    if !(params.nu > 0.0) {
        out.push(ParamViolation::NonPositiveViscosity(params.nu));
    }
    if !(params.coupling_k > 0.0) {
        out.push(ParamViolation::NonPositiveCoupling(params.coupling_k));
    }
    if params.species.is_empty() {
        out.push(ParamViolation::NoSpecies);
    }
    for (i, s) in params.species.iter().enumerate() {
        if !(s.diffusivity > 0.0) {
            out.push(ParamViolation::NonPositiveDiffusivity {
                species: i,
                value: s.diffusivity,
            });
        }
    }
    if params.equal_diffusivity_mode {
        if let Some(first) = params.species.first() {
            if params.species.iter().any(|s| s.diffusivity != first.diffusivity) {
                out.push(ParamViolation::UnequalDiffusivities);
            }
        }
        for (i, s) in params.species.iter().enumerate() {
            if s.valence.abs() != 1 {
                out.push(ParamViolation::NonUnitValence {
                    species: i,
                    valence: s.valence,
                });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl SimParams {
    /// Number of species `m`.
    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    /// `D = min_i D_i`.
    pub fn min_diffusivity(&self) -> f64 {
        self.species
            .iter()
            .map(|s| s.diffusivity)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every valence is `+-1`.
    pub fn unit_valences(&self) -> bool {
        self.species.iter().all(|s| s.valence.abs() == 1)
    }

    /// [`validate_params`] as a `Result`.
    pub fn validated(&self) -> Result<()> {
        validate_params(self).map_err(Error::InvalidParams)
    }
}
