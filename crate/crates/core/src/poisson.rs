//! Dirichlet Poisson solves `-eps Laplacian Phi = f`, the splitting
//! `Phi = Phi_0 + Phi_W`, and discrete gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::field::{l2_norm, BoundaryTrace, CellField, FaceField};
use crate::grid::Grid;
use crate::linalg::{conjugate_gradient, BasisKind, SeparableSolver, SolveStats};
use crate::math;
use crate::stencil::{self, apply_neg_laplacian_homogeneous, ScalarBc};

/// Default relative residual tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Preconditioner used inside CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    /// Diagonal scaling.
    Jacobi,
    /// Exact separable eigenbasis inverse.
    Eigenbasis,
}

/// Solver state for the homogeneous Dirichlet Laplacian on one grid.
#[derive(Debug, Clone)]
pub struct PoissonWorkspace {
    grid: Grid,
    tolerance: f64,
    max_iter: usize,
    preconditioner: Preconditioner,
    diagonal: Vec<f64>,
    eigen: SeparableSolver,
    last: Option<SolveStats>,
}

impl PoissonWorkspace {
    /// Workspace with relative tolerance `tolerance` and the eigenbasis
    /// preconditioner. The iteration cap is ten times the cell count.
    pub fn new(grid: &Grid, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::Scope("solver tolerance must be positive"));
        }
        Ok(PoissonWorkspace {
            grid: grid.clone(),
            tolerance,
            max_iter: 10 * grid.cell_count(),
            preconditioner: Preconditioner::Eigenbasis,
            diagonal: stencil::neg_laplacian_diagonal(grid, true),
            eigen: SeparableSolver::new(grid, BasisKind::Dirichlet),
            last: None,
        })
    }

    /// Switches the preconditioner.
    pub fn with_preconditioner(mut self, p: Preconditioner) -> Self {
        self.preconditioner = p;
        self
    }

    /// Overrides the iteration cap.
    pub fn with_max_iterations(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// The grid this workspace was built for.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Relative residual tolerance.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Statistics of the most recent solve.
    pub fn last_stats(&self) -> Option<SolveStats> {
        self.last
    }

    /// Solves `(-Laplacian_h) x = rhs` with homogeneous Dirichlet data to an
    /// absolute Euclidean residual `abs_tol`.
    fn solve_homogeneous(&mut self, rhs: &[f64], abs_tol: f64) -> Result<CellField> {
        let grid = &self.grid;
        let mut x = vec![0.0; grid.cell_count()];
        let op = |v: &[f64], out: &mut [f64]| apply_neg_laplacian_homogeneous(grid, true, v, out);
        let stats = match self.preconditioner {
            Preconditioner::Jacobi => {
                let diag = &self.diagonal;
                conjugate_gradient(
                    op,
                    |r, z| {
                        for i in 0..r.len() {
                            z[i] = r[i] / diag[i];
                        }
                    },
                    rhs,
                    &mut x,
                    abs_tol,
                    self.max_iter,
                    false,
                )?
            }
            Preconditioner::Eigenbasis => {
                let eig = &self.eigen;
                conjugate_gradient(op, |r, z| eig.solve(r, z), rhs, &mut x, abs_tol, self.max_iter, false)?
            }
        };
        self.last = Some(stats);
        Ok(x)
    }
}

/// Contribution of Dirichlet data to `-Laplacian_h`: `-Laplacian_h(0; g)`.
fn boundary_lift(grid: &Grid, g: &BoundaryTrace) -> CellField {
    let zero = vec![0.0; grid.cell_count()];
    stencil::neg_laplacian(grid, &zero, ScalarBc::Dirichlet(g))
}

/// Solves `-eps Laplacian_h Phi = f` with `Phi = g` on the boundary.
///
/// Converges once `||-eps Laplacian_h Phi - f|| <= tol * max(1, ||f||)` in the
/// discrete `L^2` norm, where `tol` is the workspace tolerance.
pub fn solve_poisson_dirichlet(
    ws: &mut PoissonWorkspace,
    source: &[f64],
    boundary: &BoundaryTrace,
    epsilon: f64,
) -> Result<CellField> {
    let grid = ws.grid.clone();
    if source.len() != grid.cell_count() {
        return Err(Error::ShapeMismatch("Poisson source length"));
    }
    // eps * A Phi = f - eps * lift(g)
    let lift = boundary_lift(&grid, boundary);
    let rhs: Vec<f64> = source
        .iter()
        .zip(&lift)
        .map(|(f, l)| f / epsilon - l)
        .collect();
    let target = ws.tolerance * f64::max(1.0, l2_norm(&grid, source));
    // Euclidean residual of the scaled system, converted to the weighted norm.
    let abs_tol = target / (epsilon * math::sqrt(grid.cell_volume()));
    ws.solve_homogeneous(&rhs, abs_tol)
}

/// Potential together with its zero-boundary part.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSplit {
    /// `Phi = Phi_0 + Phi_W`.
    pub phi: CellField,
    /// `Phi_0 = eps^{-1} (-Laplacian_D)^{-1} rho`.
    pub phi0: CellField,
}

/// Solves for `Phi_0` with zero boundary data and adds the harmonic lift
/// `Phi_W` stored in `boundary`.
pub fn split_potential(
    ws: &mut PoissonWorkspace,
    rho: &[f64],
    boundary: &BoundaryData,
    epsilon: f64,
) -> Result<PotentialSplit> {
    let zero = BoundaryTrace::zero(&ws.grid);
    let phi0 = solve_poisson_dirichlet(ws, rho, &zero, epsilon)?;
    let phi = phi0.iter().zip(&boundary.phi_w).map(|(a, b)| a + b).collect();
    Ok(PotentialSplit { phi, phi0 })
}

/// Homogeneous solve used by the harmonic extension: `(-Laplacian_h) x = b`.
pub(crate) fn harmonic_extension(ws: &mut PoissonWorkspace, g: &BoundaryTrace) -> Result<CellField> {
    let grid = ws.grid.clone();
    let lift = boundary_lift(&grid, g);
    let rhs: Vec<f64> = lift.iter().map(|l| -l).collect();
    let scale = f64::max(1.0, math::sqrt(rhs.iter().map(|v| v * v).sum::<f64>()));
    ws.solve_homogeneous(&rhs, ws.tolerance * scale)
}

/// Face-centered gradient of a cell field with Dirichlet data `boundary`.
pub fn gradient(grid: &Grid, field: &[f64], boundary: &BoundaryTrace) -> FaceField {
    stencil::face_gradient(grid, field, ScalarBc::Dirichlet(boundary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_cells;
    use crate::grid::build_grid;
    use core::f64::consts::PI;

    fn unit(n: usize) -> Grid {
        build_grid(2, &[1.0, 1.0], &[n, n]).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = unit(8);
        let mut ws = PoissonWorkspace::new(&g, 1e-10).unwrap();
        let phi = solve_poisson_dirichlet(&mut ws, &vec![0.0; 64], &BoundaryTrace::zero(&g), 1.0).unwrap();
        assert!(phi.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_boundary_gives_constant() {
        let g = unit(8);
        let mut ws = PoissonWorkspace::new(&g, 1e-12).unwrap();
        let phi =
            solve_poisson_dirichlet(&mut ws, &vec![0.0; 64], &BoundaryTrace::constant(&g, 5.0), 1.0).unwrap();
        assert!(phi.iter().all(|v| (v - 5.0).abs() < 1e-10));
    }

    #[test]
    fn residual_meets_tolerance() {
        let g = unit(16);
        let f = sample_cells(&g, |x| 10.0 * (x[0] - 0.3) * x[1]);
        let w = BoundaryTrace::from_fn(&g, |x| x[0] - x[1] * x[1]);
        for p in [Preconditioner::Jacobi, Preconditioner::Eigenbasis] {
            let mut ws = PoissonWorkspace::new(&g, 1e-10).unwrap().with_preconditioner(p);
            let eps = 0.3;
            let phi = solve_poisson_dirichlet(&mut ws, &f, &w, eps).unwrap();
            let lap = stencil::neg_laplacian(&g, &phi, ScalarBc::Dirichlet(&w));
            let res: Vec<f64> = lap.iter().zip(&f).map(|(l, f)| eps * l - f).collect();
            assert!(l2_norm(&g, &res) <= 1e-10 * l2_norm(&g, &f).max(1.0));
        }
    }

    #[test]
    fn jacobi_cap_exceeded_reports_error() {
        let g = unit(16);
        let f = vec![1.0; g.cell_count()];
        let mut ws = PoissonWorkspace::new(&g, 1e-12)
            .unwrap()
            .with_preconditioner(Preconditioner::Jacobi)
            .with_max_iterations(2);
        let err = solve_poisson_dirichlet(&mut ws, &f, &BoundaryTrace::zero(&g), 1.0).unwrap_err();
        assert!(matches!(err, Error::SolverDiverged { iterations: 2, .. }));
    }

    #[test]
    fn gradient_linear_exact() {
        let g = unit(8);
        let f = sample_cells(&g, |x| x[0]);
        let t = BoundaryTrace::from_fn(&g, |x| x[0]);
        let gr = gradient(&g, &f, &t);
        assert!(gr.comps[0].iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert!(gr.comps[1].iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn gradient_of_sine_second_order_on_interior_faces() {
        let err = |n: usize| {
            let g = unit(n);
            let f = sample_cells(&g, |x| (PI * x[0]).sin());
            let t = BoundaryTrace::from_fn(&g, |x| (PI * x[0]).sin());
            let gr = gradient(&g, &f, &t);
            let mut e: f64 = 0.0;
            for (idx, v) in gr.comps[0].iter().enumerate() {
                let ijk = g.face_coords(0, idx);
                if g.is_boundary_face(0, ijk) {
                    continue;
                }
                let x = g.face_center(0, ijk);
                e = e.max((v - PI * (PI * x[0]).cos()).abs());
            }
            e
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!((e1 / e2).log2() >= 1.9 && (e2 / e3).log2() >= 1.9, "{e1} {e2} {e3}");
    }
}
