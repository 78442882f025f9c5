//! Time-level state of the coupled system and the charge density.

use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::field::{CellField, FaceField};
use crate::grid::Grid;
use crate::params::{SimParams, Species};
use crate::poisson::{split_potential, PoissonWorkspace};

/// Concentrations below `-NEGATIVITY_SLACK` are rejected as negative.
pub const NEGATIVITY_SLACK: f64 = 1e-13;

/// Fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Time.
    pub t: f64,
    /// Steps taken so far.
    pub step: u64,
    /// Concentrations `c_i`, one cell field per species.
    pub c: Vec<CellField>,
    /// Potential `Phi = Phi_0 + Phi_W`.
    pub phi: CellField,
    /// Zero-boundary part `Phi_0` of the potential.
    pub phi0: CellField,
    /// MAC velocity.
    pub u: FaceField,
    /// Pressure.
    pub p: CellField,
}

impl State {
    /// State with the given concentrations, zero velocity and pressure, and
    /// the potential solved from the concentrations.
    pub fn new(
        grid: &Grid,
        c: Vec<CellField>,
        boundary: &BoundaryData,
        params: &SimParams,
        ws: &mut PoissonWorkspace,
    ) -> Result<Self> {
        let nc = grid.cell_count();
        if c.iter().any(|f| f.len() != nc) {
            return Err(Error::ShapeMismatch("concentration field length"));
        }
        let mut s = State {
            t: 0.0,
            step: 0,
            c,
            phi: vec![0.0; nc],
            phi0: vec![0.0; nc],
            u: FaceField::zeros(grid),
            p: vec![0.0; nc],
        };
        s.check_nonnegative()?;
        s.refresh_potential(boundary, params, ws)?;
        Ok(s)
    }

    /// Re-solves the potential for the current concentrations.
    pub fn refresh_potential(
        &mut self,
        boundary: &BoundaryData,
        params: &SimParams,
        ws: &mut PoissonWorkspace,
    ) -> Result<()> {
        let rho = charge_density(&self.c, &params.species)?;
        let split = split_potential(ws, &rho, boundary, params.epsilon)?;
        self.phi = split.phi;
        self.phi0 = split.phi0;
        Ok(())
    }

    /// Errors on the first concentration below `-NEGATIVITY_SLACK`.
    pub fn check_nonnegative(&self) -> Result<()> {
        check_nonnegative(&self.c)
    }

    /// Errors on the first non-finite field.
    pub fn check_finite(&self) -> Result<()> {
        if self.c.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("c"));
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phi"));
        }
        if !self.u.is_finite() {
            return Err(Error::NonFinite("u"));
        }
        if self.p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("p"));
        }
        Ok(())
    }
}

/// Errors on the first concentration below `-NEGATIVITY_SLACK`.
pub fn check_nonnegative(c: &[CellField]) -> Result<()> {
    for (species, f) in c.iter().enumerate() {
        if let Some((cell, &value)) = f.iter().enumerate().find(|(_, v)| **v < -NEGATIVITY_SLACK) {
            return Err(Error::NegativeConcentration {
                species,
                cell,
                value,
            });
        }
    }
    Ok(())
}

/// `rho = sum_i z_i c_i`.
pub fn charge_density(c: &[CellField], species: &[Species]) -> Result<CellField> {
    if c.len() != species.len() {
        return Err(Error::SpeciesMismatch {
            expected: species.len(),
            found: c.len(),
        });
    }
    let n = c.first().map_or(0, |f| f.len());
    if c.iter().any(|f| f.len() != n) {
        return Err(Error::ShapeMismatch("concentration field length"));
    }
    let mut rho = vec![0.0; n];
    for (f, s) in c.iter().zip(species) {
        let z = s.valence as f64;
        for (r, v) in rho.iter_mut().zip(f) {
            *r += z * v;
        }
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> Vec<Species> {
        vec![
            Species {
                valence: 1,
                diffusivity: 1.0,
            },
            Species {
                valence: -1,
                diffusivity: 1.0,
            },
        ]
    }

    #[test]
    fn unit_salt() {
        let rho = charge_density(&[vec![2.0; 64], vec![1.0; 64]], &pair()).unwrap();
        assert!(rho.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn neutral_pair() {
        let c: Vec<f64> = (0..64).map(|i| 0.1 * i as f64).collect();
        let rho = charge_density(&[c.clone(), c], &pair()).unwrap();
        assert!(rho.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn count_mismatch() {
        let err = charge_density(&[vec![1.0; 4]], &pair()).unwrap_err();
        assert_eq!(
            err,
            Error::SpeciesMismatch {
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn negativity_slack() {
        assert!(check_nonnegative(&[vec![-1e-14, 1.0]]).is_ok());
        assert!(matches!(
            check_nonnegative(&[vec![1.0, -1e-12]]),
            Err(Error::NegativeConcentration { cell: 1, .. })
        ));
    }
}
