//! One coupled time step: potential, ion transport, flow.

use alloc::vec::Vec;

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::field::{CellField, FaceField};
use crate::flow::{advance_flow, electric_force, max_flow_dt, FlowWorkspace};
use crate::grid::Grid;
use crate::nernst_planck::{advance_concentrations, max_positive_dt, stable_dt, SAFETY};
use crate::params::{FlowMode, SimParams};
use crate::poisson::PoissonWorkspace;
use crate::state::{charge_density, State};

/// Solver tolerances of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative residual of every Poisson solve.
    pub poisson: f64,
    /// Absolute residual of the pressure projection.
    pub projection: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            poisson: crate::poisson::DEFAULT_TOLERANCE,
            projection: crate::flow::DEFAULT_PROJECTION_TOLERANCE,
        }
    }
}

/// Owns the workspaces of a run and advances [`State`]s.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    params: SimParams,
    boundary: BoundaryData,
    poisson: PoissonWorkspace,
    flow: FlowWorkspace,
}

impl Stepper {
    /// Validates `params` against the boundary data and allocates workspaces.
    pub fn new(grid: &Grid, params: &SimParams, boundary: BoundaryData, tol: Tolerances) -> Result<Self> {
        params.validated()?;
        if boundary.species_count() != params.species.len() {
            return Err(Error::SpeciesMismatch {
                expected: params.species.len(),
                found: boundary.species_count(),
            });
        }
        Ok(Stepper {
            grid: grid.clone(),
            params: params.clone(),
            boundary,
            poisson: PoissonWorkspace::new(grid, tol.poisson)?,
            flow: FlowWorkspace::new(grid, tol.projection)?,
        })
    }

    /// Grid of the run.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Parameters of the run.
    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Boundary data of the run.
    pub fn boundary(&self) -> &BoundaryData {
        &self.boundary
    }

    /// Poisson workspace, for callers that need extra solves.
    pub fn poisson(&mut self) -> &mut PoissonWorkspace {
        &mut self.poisson
    }

    /// Flow workspace.
    pub fn flow(&self) -> &FlowWorkspace {
        &self.flow
    }

    /// State at `t = 0` with zero velocity and the potential solved from `c`.
    pub fn initial_state(&mut self, c: Vec<CellField>) -> Result<State> {
        State::new(&self.grid, c, &self.boundary, &self.params, &mut self.poisson)
    }

    /// Step size for `state`: the smallest of [`stable_dt`], the flow bound
    /// and `SAFETY` times the positivity bound.
    pub fn suggested_dt(&self, state: &State, dt_max: f64) -> f64 {
        let np = stable_dt(&self.grid, state, &self.boundary, &self.params, dt_max);
        let pos = SAFETY * max_positive_dt(&self.grid, state, &self.boundary, &self.params);
        np.min(pos).min(max_flow_dt(&self.grid, &state.u, &self.params))
    }

    /// Electric force `-K rho grad Phi` of `state`.
    pub fn force(&self, state: &State) -> Result<FaceField> {
        let rho = charge_density(&state.c, &self.params.species)?;
        Ok(electric_force(
            &self.grid,
            &rho,
            &state.phi,
            &self.boundary.w,
            self.params.coupling_k,
        ))
    }

    /// Advances `state` by `dt`. The potential of the returned state is
    /// consistent with its concentrations.
    pub fn step(&mut self, state: &State, dt: f64) -> Result<State> {
        self.step_with(state, dt, None, None)
    }

    /// [`Stepper::step`] with optional concentration sources and an extra
    /// body force, both evaluated at the old time level.
    pub fn step_with(
        &mut self,
        state: &State,
        dt: f64,
        sources: Option<&[CellField]>,
        extra_force: Option<&FaceField>,
    ) -> Result<State> {
        let c = advance_concentrations(&self.grid, state, &self.boundary, &self.params, dt, sources)?;
        let (u, p) = if self.params.flow_mode == FlowMode::FrozenZeroVelocity {
            (state.u.clone(), state.p.clone())
        } else {
            let mut f = self.force(state)?;
            if let Some(extra) = extra_force {
                f.axpy(1.0, extra);
            }
            let fs = advance_flow(&mut self.flow, &state.u, &f, &self.params, dt)?;
            (fs.u, fs.p)
        };
        let mut next = State {
            t: state.t + dt,
            step: state.step + 1,
            c,
            phi: state.phi.clone(),
            phi0: state.phi0.clone(),
            u,
            p,
        };
        next.refresh_potential(&self.boundary, &self.params, &mut self.poisson)?;
        next.check_finite()?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::extend_boundary_data;
    use crate::field::{sample_cells, BoundaryTrace};
    use crate::grid::build_grid;
    use crate::params::Species;
    use alloc::vec;

    fn params(mode: FlowMode) -> SimParams {
        SimParams {
            epsilon: 0.2,
            nu: 1.0,
            coupling_k: 1.0,
            species: vec![
                Species {
                    valence: 1,
                    diffusivity: 1.0,
                },
                Species {
                    valence: -1,
                    diffusivity: 0.5,
                },
            ],
            flow_mode: mode,
            equal_diffusivity_mode: false,
        }
    }

    #[test]
    fn neutral_uniform_state_is_fixed_point() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let one = BoundaryTrace::constant(&g, 1.0);
        let bd = extend_boundary_data(&g, vec![one.clone(), one], BoundaryTrace::constant(&g, 3.0), 1e-12).unwrap();
        let p = params(FlowMode::NavierStokes);
        let mut st = Stepper::new(&g, &p, bd, Tolerances::default()).unwrap();
        let s0 = st.initial_state(vec![vec![1.0; 64], vec![1.0; 64]]).unwrap();
        let dt = st.suggested_dt(&s0, 1.0);
        let mut s = s0.clone();
        for _ in 0..50 {
            s = st.step(&s, dt).unwrap();
        }
        for (a, b) in s.c.iter().flatten().zip(s0.c.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.u.max_abs() < 1e-12);
        assert_eq!(s.step, 50);
    }

    #[test]
    fn charged_run_stays_positive_and_solenoidal() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 2.0), BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::from_fn(&g, |x| 5.0 * x[0]),
            1e-12,
        )
        .unwrap();
        let p = params(FlowMode::Stokes);
        let mut st = Stepper::new(&g, &p, bd.clone(), Tolerances::default()).unwrap();
        let bump = sample_cells(&g, |x| (3.0 * x[0]).sin() * (2.0 * x[1]).sin().powi(2));
        let c0 = bd.big_gamma[0].iter().zip(&bump).map(|(g, b)| g + b).collect();
        let mut s = st.initial_state(vec![c0, bd.big_gamma[1].clone()]).unwrap();
        for _ in 0..200 {
            let dt = st.suggested_dt(&s, 1e-2);
            s = st.step(&s, dt).unwrap();
            assert!(s.c.iter().flatten().all(|v| *v >= 0.0));
        }
        let div = crate::flow::velocity_divergence(&g, &s.u);
        assert!(div.iter().all(|d| d.abs() < 1e-8));
        assert!(s.u.max_abs() > 0.0);
    }
}
