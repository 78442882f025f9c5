//! Unsteady Stokes / Navier-Stokes on the MAC grid with no-slip walls.
//!
//! Component `a` of the velocity lives on faces normal to axis `a`. Faces on
//! the walls normal to `a` carry the no-penetration value zero and are never
//! updated; tangential no-slip enters through the ghost value `-u` half a cell
//! outside the wall.
//!
//! A step is explicit viscosity, optional upwind advection and the electric
//! force, followed by a Chorin projection with a homogeneous Neumann pressure
//! solve. `p = phi / dt` where `phi` is the projection potential.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{BoundaryTrace, CellField, FaceField};
use crate::grid::Grid;
use crate::linalg::{conjugate_gradient, BasisKind, SeparableSolver, SolveStats};
use crate::params::{FlowMode, SimParams};
use crate::stencil::{apply_neg_laplacian_homogeneous, divergence, face_average, face_gradient, ScalarBc};

/// Default absolute tolerance on the discrete divergence after projection.
pub const DEFAULT_PROJECTION_TOLERANCE: f64 = 1e-10;

/// Neumann pressure solver for one grid.
#[derive(Debug, Clone)]
pub struct FlowWorkspace {
    grid: Grid,
    tolerance: f64,
    max_iter: usize,
    neumann: SeparableSolver,
    last: Option<SolveStats>,
    mean_divergence_removed: f64,
}

impl FlowWorkspace {
    /// Workspace whose projections reach `max |div u| <= tolerance`.
    pub fn new(grid: &Grid, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::Scope("projection tolerance must be positive"));
        }
        Ok(FlowWorkspace {
            grid: grid.clone(),
            tolerance,
            max_iter: 10 * grid.cell_count(),
            neumann: SeparableSolver::new(grid, BasisKind::Neumann),
            last: None,
            mean_divergence_removed: 0.0,
        })
    }

    /// Projection tolerance.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Statistics of the most recent pressure solve.
    pub fn last_stats(&self) -> Option<SolveStats> {
        self.last
    }

    /// Mean divergence subtracted for compatibility in the last projection.
    pub fn mean_divergence_removed(&self) -> f64 {
        self.mean_divergence_removed
    }
}

/// `f = -K rho_face grad Phi` on interior faces, zero on wall faces.
pub fn electric_force(grid: &Grid, rho: &[f64], phi: &[f64], w: &BoundaryTrace, k: f64) -> FaceField {
    let rho_f = face_average(grid, rho, ScalarBc::Neumann);
    let mut f = face_gradient(grid, phi, ScalarBc::Dirichlet(w));
    grid.for_each_face(|axis, face, lo, hi| {
        let v = &mut f.comps[axis][face];
        *v = if lo.is_some() && hi.is_some() {
            -k * rho_f.comps[axis][face] * *v
        } else {
            0.0
        };
    });
    f
}

/// Iterates interior faces: `f(axis, face, ijk)`.
fn for_each_interior_face(grid: &Grid, mut f: impl FnMut(usize, usize, [usize; 3])) {
    let n = grid.cells();
    for axis in 0..grid.dim() {
        let d = grid.face_dims(axis);
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let ijk = [i, j, k];
                    if ijk[axis] == 0 || ijk[axis] == n[axis] {
                        continue;
                    }
                    f(axis, grid.face_index(axis, ijk), ijk);
                }
            }
        }
    }
}

/// Vector Laplacian of a MAC field with no-slip walls; zero on wall faces.
pub fn vector_laplacian(grid: &Grid, u: &FaceField) -> FaceField {
    let mut out = FaceField::zeros(grid);
    let n = grid.cells();
    let h = grid.spacing();
    for_each_interior_face(grid, |a, face, ijk| {
        let comp = &u.comps[a];
        let c = comp[face];
        let mut acc = 0.0;
        for b in 0..grid.dim() {
            let fs = grid.face_stride(a, b);
            let inv = 1.0 / (h[b] * h[b]);
            if b == a {
                acc += inv * (comp[face + fs] - 2.0 * c + comp[face - fs]);
            } else {
                let lo = if ijk[b] > 0 { comp[face - fs] } else { -c };
                let hi = if ijk[b] + 1 < n[b] { comp[face + fs] } else { -c };
                acc += inv * (hi - 2.0 * c + lo);
            }
        }
        out.comps[a][face] = acc;
    });
    out
}

/// `||grad u||^2` for a MAC field with no-slip walls. Equals
/// `-<Laplacian_h u, u>_H` exactly.
pub fn dirichlet_energy(grid: &Grid, u: &FaceField) -> f64 {
    let n = grid.cells();
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let mut total = 0.0;
    for a in 0..grid.dim() {
        let comp = &u.comps[a];
        let d = grid.face_dims(a);
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let ijk = [i, j, k];
                    let face = grid.face_index(a, ijk);
                    let c = comp[face];
                    for b in 0..grid.dim() {
                        let fs = grid.face_stride(a, b);
                        if b == a {
                            if ijk[a] < n[a] {
                                let g = (comp[face + fs] - c) / h[a];
                                total += g * g * vol;
                            }
                        } else if ijk[a] > 0 && ijk[a] < n[a] {
                            if ijk[b] + 1 < n[b] {
                                let g = (comp[face + fs] - c) / h[b];
                                total += g * g * vol;
                            } else {
                                let g = 2.0 * c / h[b];
                                total += 0.5 * g * g * vol;
                            }
                            if ijk[b] == 0 {
                                let g = 2.0 * c / h[b];
                                total += 0.5 * g * g * vol;
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

/// `<u, v>_H`: face values times the cell volume, summed over interior faces.
pub fn h_inner(grid: &Grid, u: &FaceField, v: &FaceField) -> f64 {
    let mut total = 0.0;
    for_each_interior_face(grid, |a, face, _| total += u.comps[a][face] * v.comps[a][face]);
    total * grid.cell_volume()
}

/// Conservative first-order upwind discretization of `div(u u)` on the MAC
/// grid; zero on wall faces.
pub fn advection(grid: &Grid, u: &FaceField) -> FaceField {
    let mut out = FaceField::zeros(grid);
    let n = grid.cells();
    let h = grid.spacing();
    for_each_interior_face(grid, |a, face, ijk| {
        let ua = &u.comps[a];
        let mut acc = 0.0;
        for b in 0..grid.dim() {
            let fs = grid.face_stride(a, b);
            if b == a {
                // Dual faces at the centers of the two adjacent cells.
                let hi_u = 0.5 * (ua[face] + ua[face + fs]);
                let lo_u = 0.5 * (ua[face - fs] + ua[face]);
                let hi = upwind(hi_u, ua[face], ua[face + fs]);
                let lo = upwind(lo_u, ua[face - fs], ua[face]);
                acc += (hi - lo) / h[b];
            } else {
                // Dual faces on the edges shared with the neighbours along b;
                // the transporting velocity is the mean of u_b on the two
                // b-faces that straddle the face along a.
                let ub = &u.comps[b];
                let transport = |side_hi: bool| {
                    let mut left = ijk;
                    left[a] -= 1;
                    let mut right = ijk;
                    if side_hi {
                        left[b] += 1;
                        right[b] += 1;
                    }
                    0.5 * (ub[grid.face_index(b, left)] + ub[grid.face_index(b, right)])
                };
                let hi = if ijk[b] + 1 < n[b] {
                    upwind(transport(true), ua[face], ua[face + fs])
                } else {
                    0.0
                };
                let lo = if ijk[b] > 0 {
                    upwind(transport(false), ua[face - fs], ua[face])
                } else {
                    0.0
                };
                acc += (hi - lo) / h[b];
            }
        }
        out.comps[a][face] = acc;
    });
    out
}

#[inline]
fn upwind(v: f64, left: f64, right: f64) -> f64 {
    if v > 0.0 {
        v * left
    } else {
        v * right
    }
}

/// Energy exchanged by the advection term, `-<advection(u), u>_H`. The
/// upwind form makes it nonpositive up to the divergence left by projection.
pub fn advection_energy(grid: &Grid, u: &FaceField) -> f64 {
    -h_inner(grid, &advection(grid, u), u)
}

/// Discrete divergence of a MAC field.
pub fn velocity_divergence(grid: &Grid, u: &FaceField) -> CellField {
    divergence(grid, u)
}

/// Removes the discrete-gradient part of `u_star`. Wall-normal components are
/// taken as zero. Returns the projected field and the projection potential
/// `phi` with `u = u_star - grad phi`.
pub fn project_divergence_free(ws: &mut FlowWorkspace, u_star: &FaceField) -> Result<(FaceField, CellField)> {
    let grid = ws.grid.clone();
    if !u_star.is_finite() {
        return Err(Error::NonFinite("intermediate velocity"));
    }
    let mut u = u_star.clone();
    zero_wall_faces(&grid, &mut u);
    let mut div = divergence(&grid, &u);
    let mean = div.iter().sum::<f64>() / div.len() as f64;
    div.iter_mut().for_each(|v| *v -= mean);
    ws.mean_divergence_removed = mean;
    // (-Laplacian_N) phi = -div u*
    let rhs: Vec<f64> = div.iter().map(|v| -v).collect();
    let mut phi = vec![0.0; grid.cell_count()];
    // The Euclidean residual bounds the max-norm divergence of the result.
    let abs_tol = ws.tolerance;
    let solver = &ws.neumann;
    let stats = conjugate_gradient(
        |x, y| apply_neg_laplacian_homogeneous(&grid, false, x, y),
        |r, z| solver.solve(r, z),
        &rhs,
        &mut phi,
        abs_tol,
        ws.max_iter,
        true,
    )?;
    ws.last = Some(stats);
    let grad = face_gradient(&grid, &phi, ScalarBc::Neumann);
    u.axpy(-1.0, &grad);
    zero_wall_faces(&grid, &mut u);
    Ok((u, phi))
}

fn zero_wall_faces(grid: &Grid, u: &mut FaceField) {
    grid.for_each_boundary_face(|axis, _, _, face| u.comps[axis][face] = 0.0);
}

/// Largest admissible step: `SAFETY * h^2 / (2 d nu)`, and in Navier-Stokes
/// mode also `SAFETY * h / max|u|`.
pub fn max_flow_dt(grid: &Grid, u: &FaceField, params: &SimParams) -> f64 {
    let h = grid.min_spacing();
    let d = grid.dim() as f64;
    match params.flow_mode {
        FlowMode::FrozenZeroVelocity => f64::INFINITY,
        FlowMode::Stokes => crate::nernst_planck::SAFETY * h * h / (2.0 * d * params.nu),
        FlowMode::NavierStokes => {
            let umax = u.max_abs();
            let adv = if umax > 0.0 { h / umax } else { f64::INFINITY };
            crate::nernst_planck::SAFETY * (h * h / (2.0 * d * params.nu)).min(adv)
        }
    }
}

/// Result of one flow step.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStep {
    /// New velocity.
    pub u: FaceField,
    /// New pressure.
    pub p: CellField,
}

/// Advances the velocity by one step under `force`.
pub fn advance_flow(
    ws: &mut FlowWorkspace,
    u: &FaceField,
    force: &FaceField,
    params: &SimParams,
    dt: f64,
) -> Result<FlowStep> {
    let grid = ws.grid.clone();
    if params.flow_mode == FlowMode::FrozenZeroVelocity {
        return Ok(FlowStep {
            u: FaceField::zeros(&grid),
            p: vec![0.0; grid.cell_count()],
        });
    }
    let limit = max_flow_dt(&grid, u, params);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::TimeStepTooLarge { dt, limit });
    }
    let mut rate = vector_laplacian(&grid, u);
    for c in rate.comps.iter_mut() {
        c.iter_mut().for_each(|v| *v *= params.nu);
    }
    if params.flow_mode == FlowMode::NavierStokes {
        rate.axpy(-1.0, &advection(&grid, u));
    }
    rate.axpy(1.0, force);
    let mut u_star = u.clone();
    u_star.axpy(dt, &rate);
    zero_wall_faces(&grid, &mut u_star);
    let (u_new, phi) = project_divergence_free(ws, &u_star)?;
    let p = phi.iter().map(|v| v / dt).collect();
    Ok(FlowStep { u: u_new, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_cells;
    use crate::grid::build_grid;
    use crate::params::Species;
    use core::f64::consts::PI;

    fn stokes() -> SimParams {
        SimParams {
            epsilon: 1.0,
            nu: 1.0,
            coupling_k: 1.0,
            species: vec![Species {
                valence: 1,
                diffusivity: 1.0,
            }],
            flow_mode: FlowMode::Stokes,
            equal_diffusivity_mode: false,
        }
    }

    /// Discretely divergence-free field from a stream function sampled at
    /// cell corners.
    fn from_stream(grid: &Grid, psi: impl Fn(f64, f64) -> f64) -> FaceField {
        let h = grid.spacing();
        let mut u = FaceField::zeros(grid);
        for (idx, v) in u.comps[0].iter_mut().enumerate() {
            let x = grid.face_center(0, grid.face_coords(0, idx));
            *v = (psi(x[0], x[1] + 0.5 * h[1]) - psi(x[0], x[1] - 0.5 * h[1])) / h[1];
        }
        for (idx, v) in u.comps[1].iter_mut().enumerate() {
            let x = grid.face_center(1, grid.face_coords(1, idx));
            *v = -(psi(x[0] + 0.5 * h[0], x[1]) - psi(x[0] - 0.5 * h[0], x[1])) / h[0];
        }
        u
    }

    fn bump(x: f64, y: f64) -> f64 {
        let s = (PI * x).sin() * (PI * y).sin();
        s * s
    }

    #[test]
    fn zero_force_zero_velocity() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let mut ws = FlowWorkspace::new(&g, 1e-10).unwrap();
        let z = FaceField::zeros(&g);
        let step = advance_flow(&mut ws, &z, &z, &stokes(), 1e-3).unwrap();
        assert_eq!(step.u.max_abs(), 0.0);
        assert!(step.p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_forcing_is_annihilated() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let psi = sample_cells(&g, |x| (3.0 * x[0]).cos() * x[1] * x[1]);
        let mut f = face_gradient(&g, &psi, ScalarBc::Neumann);
        zero_wall_faces(&g, &mut f);
        let mut ws = FlowWorkspace::new(&g, 1e-12).unwrap();
        let step = advance_flow(&mut ws, &FaceField::zeros(&g), &f, &stokes(), 1e-4).unwrap();
        assert!(step.u.max_abs() <= 1e-10, "{}", step.u.max_abs());
    }

    #[test]
    fn projection_leaves_solenoidal_fields() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let u = from_stream(&g, bump);
        assert!(velocity_divergence(&g, &u).iter().all(|v| v.abs() < 1e-12));
        let mut ws = FlowWorkspace::new(&g, 1e-12).unwrap();
        let (p, _) = project_divergence_free(&mut ws, &u).unwrap();
        let mut d = p.clone();
        d.axpy(-1.0, &u);
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal() {
        let g = build_grid(3, &[1.0, 1.0, 1.0], &[6, 6, 6]).unwrap();
        let mut u = FaceField::from_fn(&g, |a, x| (a as f64 + 1.0) * (x[0] * 3.0 + x[1] * x[2]).sin());
        zero_wall_faces(&g, &mut u);
        let mut ws = FlowWorkspace::new(&g, 1e-12).unwrap();
        let (p1, _) = project_divergence_free(&mut ws, &u).unwrap();
        assert!(velocity_divergence(&g, &p1).iter().all(|v| v.abs() < 1e-10));
        let (p2, _) = project_divergence_free(&mut ws, &p1).unwrap();
        let mut d = p2.clone();
        d.axpy(-1.0, &p1);
        assert!(d.max_abs() < 1e-11);
    }

    #[test]
    fn laplacian_and_dirichlet_energy_are_dual() {
        for (dim, cells) in [(2usize, [7usize, 9, 1]), (3, [5, 4, 6])] {
            let ext = [1.0, 1.3, 0.8];
            let g = build_grid(dim, &ext[..dim], &cells[..dim]).unwrap();
            let mut u = FaceField::from_fn(&g, |a, x| (x[0] + 2.0 * x[1] - a as f64).sin() + x[2]);
            zero_wall_faces(&g, &mut u);
            let lap = vector_laplacian(&g, &u);
            let lhs = -h_inner(&g, &lap, &u);
            let rhs = dirichlet_energy(&g, &u);
            assert!((lhs - rhs).abs() < 1e-10 * rhs, "{lhs} {rhs}");
        }
    }

    #[test]
    fn electric_force_sign() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let rho = vec![2.0; 64];
        let w = BoundaryTrace::from_fn(&g, |x| x[0]);
        let phi = sample_cells(&g, |x| x[0]);
        let f = electric_force(&g, &rho, &phi, &w, 0.5);
        g.for_each_face(|axis, face, lo, hi| {
            let expect = if axis == 0 && lo.is_some() && hi.is_some() { -1.0 } else { 0.0 };
            assert!((f.comps[axis][face] - expect).abs() < 1e-12);
        });
        assert_eq!(electric_force(&g, &rho, &phi, &w, 0.0).max_abs(), 0.0);
        assert_eq!(electric_force(&g, &vec![0.0; 64], &phi, &w, 1.0).max_abs(), 0.0);
    }

    #[test]
    fn advection_dissipates_energy() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let u = from_stream(&g, |x, y| bump(x, y) * (1.0 + x));
        let a = advection_energy(&g, &u);
        assert!(a <= 1e-12, "{a}");
    }

    #[test]
    fn unforced_stokes_decays() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let mut u = from_stream(&g, bump);
        let p = stokes();
        let mut ws = FlowWorkspace::new(&g, 1e-12).unwrap();
        let dt = max_flow_dt(&g, &u, &p);
        let zero = FaceField::zeros(&g);
        let mut prev = h_inner(&g, &u, &u);
        for _ in 0..20 {
            u = advance_flow(&mut ws, &u, &zero, &p, dt).unwrap().u;
            let e = h_inner(&g, &u, &u);
            assert!(e <= prev);
            prev = e;
        }
        assert!(matches!(
            advance_flow(&mut ws, &u, &zero, &p, 2.0 * dt),
            Err(Error::TimeStepTooLarge { .. })
        ));
    }
}
