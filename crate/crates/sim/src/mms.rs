//! Manufactured-solution convergence studies.
//!
//! Every case runs on the unit square at three or more resolutions with
//! `dt = 0.15 h^2 / max(D, nu)`, which sits inside both the positivity bound
//! of corner cells (`h^2 / 6D`) and the viscous bound.
//!
//! * `poisson`: `Phi = sin(pi x) sin(pi y) + x^2 - y^2`.
//! * `np`: one cation with `D = 1` in the frozen potential
//!   `Phi = x + S/2`, `c = 1 + x/2 + y/4 + e^{-t} S / 2`, `u = 0`, where
//!   `S = sin(pi x) sin(pi y)`. Also a first-order-in-time self-convergence
//!   study at the middle resolution.
//! * `stokes`: steady velocity of the stream function
//!   `sin^2(pi x) sin^2(pi y)` with pressure `cos(pi x) cos(pi y)`.
//! * `coupled`: two species, Stokes flow and the full coupling, with the
//!   anion chosen so that the manufactured potential solves the Poisson
//!   equation exactly. Upwinded advection caps the spatial order near one.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use npns_core::audit::observed_order;
use npns_core::field::{l2_norm, max_abs, sample_cells, BoundaryTrace};
use npns_core::flow::{advance_flow, FlowWorkspace};
use npns_core::nernst_planck::advance_concentrations;
use npns_core::poisson::{solve_poisson_dirichlet, PoissonWorkspace};
use npns_core::{
    build_grid, extend_boundary_data, CellField, FaceField, FlowMode, Grid, SimParams, Species, State, Stepper,
    Tolerances,
};

use crate::error::{Result, SimError};

/// Built-in manufactured problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsCase {
    /// Poisson equation alone.
    Poisson,
    /// Nernst-Planck transport in a frozen potential.
    NernstPlanck,
    /// Unsteady Stokes flow.
    Stokes,
    /// The whole coupled system.
    Coupled,
}

impl FromStr for MmsCase {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(MmsCase::Poisson),
            "np" => Ok(MmsCase::NernstPlanck),
            "stokes" => Ok(MmsCase::Stokes),
            "coupled" => Ok(MmsCase::Coupled),
            other => Err(SimError::UnknownCase(other.to_string())),
        }
    }
}

impl fmt::Display for MmsCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MmsCase::Poisson => "poisson",
            MmsCase::NernstPlanck => "np",
            MmsCase::Stokes => "stokes",
            MmsCase::Coupled => "coupled",
        })
    }
}

/// Error of one field at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    /// Field name.
    pub field: &'static str,
    /// Maximum error.
    pub linf: f64,
    /// Discrete `L^2` error.
    pub l2: f64,
}

/// One resolution of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    /// Cells per axis.
    pub cells: usize,
    /// Mesh width.
    pub h: f64,
    /// Step size, 0 for stationary problems.
    pub dt: f64,
    /// Steps taken.
    pub steps: u64,
    /// Errors per field.
    pub errors: Vec<FieldError>,
    /// `(L^inf, L^2)` orders against the previous row, per field.
    pub orders: Vec<(f64, f64)>,
}

/// Self-convergence in `dt` at fixed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStudy {
    /// Cells per axis.
    pub cells: usize,
    /// Step sizes, halving.
    pub dts: Vec<f64>,
    /// Maximum difference between successive solutions.
    pub differences: Vec<f64>,
    /// Orders from successive differences.
    pub orders: Vec<f64>,
}

/// Result of [`verify_mms`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// Problem solved.
    pub case: MmsCase,
    /// One row per resolution, coarse first.
    pub rows: Vec<ConvergenceRow>,
    /// Temporal study, for time-dependent scalar cases.
    pub temporal: Option<TemporalStudy>,
}

impl ConvergenceTable {
    /// Smallest observed `L^inf` order of `field` over all refinements.
    pub fn min_order(&self, field: &str) -> f64 {
        let idx = self.rows[0].errors.iter().position(|e| e.field == field);
        let Some(idx) = idx else { return f64::NAN };
        self.rows
            .iter()
            .skip(1)
            .map(|r| r.orders[idx].0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest temporal order, if a temporal study ran.
    pub fn min_temporal_order(&self) -> Option<f64> {
        self.temporal
            .as_ref()
            .map(|t| t.orders.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// CSV rendering: one line per resolution and field.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("case,cells,h,dt,steps,field,linf,l2,order_linf,order_l2\n");
        for r in &self.rows {
            for (k, e) in r.errors.iter().enumerate() {
                let (ol, o2) = r.orders.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
                s += &format!(
                    "{},{},{:e},{:e},{},{},{:e},{:e},{:.4},{:.4}\n",
                    self.case, r.cells, r.h, r.dt, r.steps, e.field, e.linf, e.l2, ol, o2
                );
            }
        }
        s
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case {}", self.case)?;
        writeln!(
            f,
            "{:>6} {:>10} {:>10} {:>7} {:>6} {:>12} {:>12} {:>7} {:>7}",
            "cells", "h", "dt", "steps", "field", "L_inf", "L_2", "ord_inf", "ord_2"
        )?;
        for r in &self.rows {
            for (k, e) in r.errors.iter().enumerate() {
                let (ol, o2) = r.orders.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
                writeln!(
                    f,
                    "{:>6} {:>10.3e} {:>10.3e} {:>7} {:>6} {:>12.4e} {:>12.4e} {:>7.3} {:>7.3}",
                    r.cells, r.h, r.dt, r.steps, e.field, e.linf, e.l2, ol, o2
                )?;
            }
        }
        if let Some(t) = &self.temporal {
            writeln!(f, "temporal self-convergence on {}^2", t.cells)?;
            for (k, d) in t.differences.iter().enumerate() {
                let o = if k == 0 { f64::NAN } else { t.orders[k - 1] };
                writeln!(f, "  dt {:>10.3e}  diff {:>12.4e}  order {:>7.3}", t.dts[k + 1], d, o)?;
            }
        }
        Ok(())
    }
}

/// Runs `case` on `cells x cells` grids for every entry of `resolutions`.
pub fn verify_mms(case: MmsCase, resolutions: &[usize]) -> Result<ConvergenceTable> {
    if resolutions.len() < 3 {
        return Err(SimError::Config("a convergence study needs at least 3 resolutions".into()));
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::Config("resolutions must increase".into()));
    }
    let mut rows = Vec::new();
    for &n in resolutions {
        let row = match case {
            MmsCase::Poisson => poisson_row(n)?,
            MmsCase::NernstPlanck => np_row(n, NP_T_FINAL, 1)?.0,
            MmsCase::Stokes => stokes_row(n)?,
            MmsCase::Coupled => coupled_row(n)?,
        };
        rows.push(row);
    }
    for k in 1..rows.len() {
        let (prev, cur) = (&rows[k - 1], &rows[k]);
        let orders = prev
            .errors
            .iter()
            .zip(&cur.errors)
            .map(|(a, b)| (observed_order(a.linf, b.linf, prev.h, cur.h), observed_order(a.l2, b.l2, prev.h, cur.h)))
            .collect();
        rows[k].orders = orders;
    }
    let temporal = match case {
        MmsCase::NernstPlanck => Some(np_temporal(resolutions[1], 4)?),
        _ => None,
    };
    Ok(ConvergenceTable { case, rows, temporal })
}

fn unit(n: usize) -> Result<Grid> {
    Ok(build_grid(2, &[1.0, 1.0], &[n, n])?)
}

fn field_error(grid: &Grid, field: &'static str, num: &[f64], exact: &[f64]) -> FieldError {
    let e: Vec<f64> = num.iter().zip(exact).map(|(a, b)| a - b).collect();
    FieldError {
        field,
        linf: max_abs(&e),
        l2: l2_norm(grid, &e),
    }
}

fn velocity_error(grid: &Grid, u: &FaceField, exact: &FaceField) -> FieldError {
    let mut linf: f64 = 0.0;
    let mut sq = 0.0;
    let h = grid.spacing();
    for axis in 0..grid.dim() {
        for (a, b) in u.comps[axis].iter().zip(&exact.comps[axis]) {
            linf = linf.max((a - b).abs());
            sq += (a - b) * (a - b) * h[0] * h[1];
        }
    }
    FieldError {
        field: "u",
        linf,
        l2: sq.sqrt(),
    }
}

fn steps_for(t_final: f64, dt: f64) -> (u64, f64) {
    let n = (t_final / dt).ceil().max(1.0) as u64;
    (n, t_final / n as f64)
}

fn sine(x: [f64; 3]) -> (f64, f64, f64) {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    (sx * sy, PI * cx * sy, PI * sx * cy)
}

fn poisson_row(n: usize) -> Result<ConvergenceRow> {
    let g = unit(n)?;
    let exact = |x: [f64; 3]| sine(x).0 + x[0] * x[0] - x[1] * x[1];
    let f = sample_cells(&g, |x| 2.0 * PI * PI * sine(x).0);
    let mut ws = PoissonWorkspace::new(&g, 1e-13)?;
    let phi = solve_poisson_dirichlet(&mut ws, &f, &BoundaryTrace::from_fn(&g, exact), 1.0)?;
    Ok(ConvergenceRow {
        cells: n,
        h: 1.0 / n as f64,
        dt: 0.0,
        steps: 0,
        errors: vec![field_error(&g, "phi", &phi, &sample_cells(&g, exact))],
        orders: Vec::new(),
    })
}

/// `c = L + beta S` with `L = 1 + x/2 + y/4`: value, gradient and Laplacian.
fn affine_plus_sine(x: [f64; 3], beta: f64) -> (f64, [f64; 2], f64) {
    let (s, sx, sy) = sine(x);
    (
        1.0 + 0.5 * x[0] + 0.25 * x[1] + beta * s,
        [0.5 + beta * sx, 0.25 + beta * sy],
        -2.0 * PI * PI * beta * s,
    )
}

/// `Phi = x + S/2`: value, gradient and Laplacian.
fn frozen_potential(x: [f64; 3]) -> (f64, [f64; 2], f64) {
    let (s, sx, sy) = sine(x);
    (x[0] + 0.5 * s, [1.0 + 0.5 * sx, 0.5 * sy], -PI * PI * s)
}

/// `dc/dt + u.grad c - D div(grad c + z c grad Phi)` for `c = L + beta(t) S`.
#[allow(clippy::too_many_arguments)]
fn np_source(x: [f64; 3], beta: f64, dbeta: f64, z: f64, d: f64, u: [f64; 2], phi: (f64, [f64; 2], f64)) -> f64 {
    let (c, gc, lc) = affine_plus_sine(x, beta);
    let (_, gp, lp) = phi;
    let div_drift = gc[0] * gp[0] + gc[1] * gp[1] + c * lp;
    dbeta * sine(x).0 + u[0] * gc[0] + u[1] * gc[1] - d * (lc + z * div_drift)
}

const NP_T_FINAL: f64 = 0.25;

fn np_params(flow_mode: FlowMode) -> SimParams {
    SimParams {
        epsilon: 1.0,
        nu: 1.0,
        coupling_k: 1.0,
        species: vec![Species {
            valence: 1,
            diffusivity: 1.0,
        }],
        flow_mode,
        equal_diffusivity_mode: false,
    }
}

/// Runs the frozen-potential case with `dt = 0.15 h^2 / refine`.
fn np_row(n: usize, t_final: f64, refine: u32) -> Result<(ConvergenceRow, CellField)> {
    let g = unit(n)?;
    let h = 1.0 / n as f64;
    let params = np_params(FlowMode::FrozenZeroVelocity);
    let beta = |t: f64| 0.5 * (-t).exp();
    let bd = extend_boundary_data(
        &g,
        vec![BoundaryTrace::from_fn(&g, |x| affine_plus_sine(x, 0.0).0)],
        BoundaryTrace::from_fn(&g, |x| frozen_potential(x).0),
        1e-13,
    )?;
    let phi = sample_cells(&g, |x| frozen_potential(x).0);
    let nc = g.cell_count();
    let mut state = State {
        t: 0.0,
        step: 0,
        c: vec![sample_cells(&g, |x| affine_plus_sine(x, beta(0.0)).0)],
        phi: phi.clone(),
        phi0: vec![0.0; nc],
        u: FaceField::zeros(&g),
        p: vec![0.0; nc],
    };
    let (steps, dt) = steps_for(t_final, 0.15 * h * h / f64::from(refine));
    let centers = g.cell_centers();
    for _ in 0..steps {
        let t = state.t;
        let src: CellField = centers
            .iter()
            .map(|x| np_source(*x, beta(t), -beta(t), 1.0, 1.0, [0.0, 0.0], frozen_potential(*x)))
            .collect();
        state.c = advance_concentrations(&g, &state, &bd, &params, dt, Some(std::slice::from_ref(&src)))?;
        state.t += dt;
        state.step += 1;
    }
    let exact = sample_cells(&g, |x| affine_plus_sine(x, beta(state.t)).0);
    let row = ConvergenceRow {
        cells: n,
        h,
        dt,
        steps,
        errors: vec![field_error(&g, "c", &state.c[0], &exact)],
        orders: Vec::new(),
    };
    Ok((row, state.c.swap_remove(0)))
}

/// Successive halvings of `dt` at fixed mesh; with first-order stepping the
/// differences between consecutive solutions halve.
fn np_temporal(n: usize, levels: u32) -> Result<TemporalStudy> {
    let t_final = 0.05;
    let mut sols = Vec::new();
    let mut dts = Vec::new();
    for k in 0..levels {
        let (row, c) = np_row(n, t_final, 1 << k)?;
        dts.push(row.dt);
        sols.push(c);
    }
    let differences: Vec<f64> = sols
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let orders = differences.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    Ok(TemporalStudy {
        cells: n,
        dts,
        differences,
        orders,
    })
}

/// Velocity of the stream function `sin^2(pi x) sin^2(pi y)` and its
/// Laplacian, component `axis`.
fn stokes_velocity(axis: usize, x: [f64; 3]) -> (f64, f64) {
    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
    let (s2x, c2x) = (2.0 * PI * x[0]).sin_cos();
    let (s2y, c2y) = (2.0 * PI * x[1]).sin_cos();
    match axis {
        0 => (PI * sx * sx * s2y, 2.0 * PI.powi(3) * s2y * (2.0 * c2x - 1.0)),
        _ => (-PI * s2x * sy * sy, -2.0 * PI.powi(3) * s2x * (2.0 * c2y - 1.0)),
    }
}

fn pressure_gradient(axis: usize, x: [f64; 3]) -> f64 {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    match axis {
        0 => -PI * sx * cy,
        _ => -PI * cx * sy,
    }
}

fn stokes_row(n: usize) -> Result<ConvergenceRow> {
    let g = unit(n)?;
    let h = 1.0 / n as f64;
    let params = np_params(FlowMode::Stokes);
    let exact = FaceField::from_fn(&g, |axis, x| stokes_velocity(axis, x).0);
    let force = FaceField::from_fn(&g, |axis, x| {
        -params.nu * stokes_velocity(axis, x).1 + pressure_gradient(axis, x)
    });
    let mut ws = FlowWorkspace::new(&g, 1e-12)?;
    let (steps, dt) = steps_for(0.2, 0.15 * h * h / params.nu);
    let mut u = exact.clone();
    for _ in 0..steps {
        u = advance_flow(&mut ws, &u, &force, &params, dt)?.u;
    }
    Ok(ConvergenceRow {
        cells: n,
        h,
        dt,
        steps,
        errors: vec![velocity_error(&g, &u, &exact)],
        orders: Vec::new(),
    })
}

const COUPLED_EPS: f64 = 0.05;
const COUPLED_D: [f64; 2] = [1.0, 0.5];

fn coupled_row(n: usize) -> Result<ConvergenceRow> {
    let g = unit(n)?;
    let h = 1.0 / n as f64;
    let params = SimParams {
        epsilon: COUPLED_EPS,
        nu: 1.0,
        coupling_k: 1.0,
        species: vec![
            Species {
                valence: 1,
                diffusivity: COUPLED_D[0],
            },
            Species {
                valence: -1,
                diffusivity: COUPLED_D[1],
            },
        ],
        flow_mode: FlowMode::Stokes,
        equal_diffusivity_mode: false,
    };
    // c_2 = c_1 + eps Laplacian Phi makes rho = -eps Laplacian Phi exactly.
    let beta1 = |t: f64| 0.5 * (-t).exp();
    let beta2 = |t: f64| beta1(t) - COUPLED_EPS * PI * PI;
    let bd = extend_boundary_data(
        &g,
        vec![
            BoundaryTrace::from_fn(&g, |x| affine_plus_sine(x, 0.0).0),
            BoundaryTrace::from_fn(&g, |x| affine_plus_sine(x, 0.0).0),
        ],
        BoundaryTrace::from_fn(&g, |x| frozen_potential(x).0),
        1e-13,
    )?;
    let tol = Tolerances {
        poisson: 1e-12,
        projection: 1e-12,
    };
    let mut stepper = Stepper::new(&g, &params, bd, tol)?;
    let c0 = vec![
        sample_cells(&g, |x| affine_plus_sine(x, beta1(0.0)).0),
        sample_cells(&g, |x| affine_plus_sine(x, beta2(0.0)).0),
    ];
    let mut state = stepper.initial_state(c0)?;
    let u_exact = FaceField::from_fn(&g, |axis, x| stokes_velocity(axis, x).0);
    state.u = u_exact.clone();
    let centers = g.cell_centers();
    let (steps, dt) = steps_for(0.05, 0.15 * h * h / COUPLED_D[0].max(params.nu));
    for _ in 0..steps {
        let t = state.t;
        let uc = |x: [f64; 3]| [stokes_velocity(0, x).0, stokes_velocity(1, x).0];
        let sources: Vec<CellField> = [(beta1(t), 1.0, COUPLED_D[0]), (beta2(t), -1.0, COUPLED_D[1])]
            .iter()
            .map(|&(b, z, d)| {
                centers
                    .iter()
                    .map(|x| np_source(*x, b, -beta1(t), z, d, uc(*x), frozen_potential(*x)))
                    .collect()
            })
            .collect();
        // Momentum residual of the exact fields, electric force included.
        let extra = FaceField::from_fn(&g, |axis, x| {
            let rho = affine_plus_sine(x, beta1(t)).0 - affine_plus_sine(x, beta2(t)).0;
            let (_, gp, _) = frozen_potential(x);
            -params.nu * stokes_velocity(axis, x).1
                + pressure_gradient(axis, x)
                + params.coupling_k * rho * gp[axis]
        });
        state = stepper.step_with(&state, dt, Some(&sources), Some(&extra))?;
    }
    let t = state.t;
    let exact_c1 = sample_cells(&g, |x| affine_plus_sine(x, beta1(t)).0);
    let exact_c2 = sample_cells(&g, |x| affine_plus_sine(x, beta2(t)).0);
    let exact_phi = sample_cells(&g, |x| frozen_potential(x).0);
    Ok(ConvergenceRow {
        cells: n,
        h,
        dt,
        steps,
        errors: vec![
            field_error(&g, "c1", &state.c[0], &exact_c1),
            field_error(&g, "c2", &state.c[1], &exact_c2),
            field_error(&g, "phi", &state.phi, &exact_phi),
            velocity_error(&g, &state.u, &u_exact),
        ],
        orders: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_laplacian(f: impl Fn([f64; 3]) -> f64, x: [f64; 3]) -> f64 {
        let e = 1e-4;
        let mut s = -4.0 * f(x);
        for (dx, dy) in [(e, 0.0), (-e, 0.0), (0.0, e), (0.0, -e)] {
            s += f([x[0] + dx, x[1] + dy, 0.0]);
        }
        s / (e * e)
    }

    #[test]
    fn closed_forms_match_finite_differences() {
        for x in [[0.3, 0.7, 0.0], [0.61, 0.12, 0.0]] {
            for axis in 0..2 {
                let lap = fd_laplacian(|y| stokes_velocity(axis, y).0, x);
                assert!((lap - stokes_velocity(axis, x).1).abs() < 1e-5 * (1.0 + lap.abs()));
            }
            let lap = fd_laplacian(|y| frozen_potential(y).0, x);
            assert!((lap - frozen_potential(x).2).abs() < 1e-5);
            let lap = fd_laplacian(|y| affine_plus_sine(y, 0.3).0, x);
            assert!((lap - affine_plus_sine(x, 0.3).2).abs() < 1e-5);
        }
    }

    #[test]
    fn stream_function_velocity_is_solenoidal() {
        let e = 1e-6;
        let x = [0.37, 0.81, 0.0];
        let du = (stokes_velocity(0, [x[0] + e, x[1], 0.0]).0 - stokes_velocity(0, [x[0] - e, x[1], 0.0]).0) / (2.0 * e);
        let dv = (stokes_velocity(1, [x[0], x[1] + e, 0.0]).0 - stokes_velocity(1, [x[0], x[1] - e, 0.0]).0) / (2.0 * e);
        assert!((du + dv).abs() < 1e-7);
    }

    #[test]
    fn case_names_parse() {
        for c in [MmsCase::Poisson, MmsCase::NernstPlanck, MmsCase::Stokes, MmsCase::Coupled] {
            assert_eq!(c.to_string().parse::<MmsCase>().unwrap(), c);
        }
        assert!(matches!("heat".parse::<MmsCase>(), Err(SimError::UnknownCase(_))));
    }

    #[test]
    fn too_few_resolutions_rejected() {
        assert!(verify_mms(MmsCase::Poisson, &[8, 16]).is_err());
    }

    #[test]
    fn poisson_case_is_second_order() {
        let t = verify_mms(MmsCase::Poisson, &[8, 16, 32]).unwrap();
        assert!(t.min_order("phi") > 1.9, "{t}");
    }
}
