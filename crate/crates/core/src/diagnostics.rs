//! Energies, dissipations, error terms and norms of a state.
//!
//! Integrals use midpoint quadrature. Squared gradients are formed on faces
//! and averaged onto cells, so `int |grad q|^2` of a field with zero boundary
//! data is exactly the discrete Dirichlet form. Integrals that involve the
//! velocity are taken over interior faces, where the MAC velocity lives.

use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::field::{integrate, lp_norm, BoundaryTrace, CellField, FaceField};
use crate::flow::{advection_energy, dirichlet_energy, h_inner, velocity_divergence};
use crate::grid::Grid;
use crate::math;
use crate::params::{FlowMode, SimParams};
use crate::poisson::{solve_poisson_dirichlet, PoissonWorkspace};
use crate::state::{charge_density, check_nonnegative, State};
use crate::stencil::{
    cell_gradient, divergence, face_average, face_dot_to_cells, face_gradient, face_sq_to_cells, faces_to_cells,
    ScalarBc,
};

/// Below this concentration the `|grad c|^2 / c` integrand is dropped.
pub const D1_FLOOR: f64 = 1e-12;

/// Default weight `delta` of the concentration part of the Lyapunov
/// functionals.
pub const DEFAULT_DELTA: f64 = 1.0;

/// Default exponent `m` of the negativity functional `F(y) = y^{2m}`, `y < 0`.
pub const DEFAULT_NEGATIVITY_EXPONENT: u32 = 2;

/// Scalars recorded at one time level.
///
/// Quantities that are undefined for the active species layout are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    /// Step index.
    pub step: u64,
    /// Time.
    pub t: f64,
    /// Relative entropy plus potential energy.
    pub e1: f64,
    /// Entropy dissipation.
    pub d1: f64,
    /// Cells where the floor in `d1` was applied.
    pub d1_floor_cells: u64,
    /// Potential energy `(1/2 eps) int rho (-Laplacian_D)^{-1} rho`.
    pub p: f64,
    /// Potential dissipation.
    pub d2: f64,
    /// `sum_i (1/D_i) ||q_i||^2` (two species only).
    pub e3: f64,
    /// `sum_i (1/2) ||grad q_i||^2 + (1/4 eps) ||rho||_3^3` (two species only).
    pub d3: f64,
    /// `kinetic + p + delta e3`.
    pub f_lyap: f64,
    /// `kinetic + p + delta int (S^2 + Z^2)` (equal-diffusivity mode only).
    pub g_lyap: f64,
    /// `(1/2K) ||u||_H^2`.
    pub kinetic: f64,
    /// `||rho||_2`.
    pub norm_rho_l2: f64,
    /// `||rho||_3`.
    pub norm_rho_l3: f64,
    /// `||rho||_4`.
    pub norm_rho_l4: f64,
    /// `||q_i||_2` per species.
    pub q_l2: Vec<f64>,
    /// `||grad q_i||_2` per species.
    pub grad_q_l2: Vec<f64>,
    /// `||u||_V = ||grad u||_2`.
    pub u_v: f64,
    /// `sum_i int F(c_i)`.
    pub negativity: f64,
    /// `max(|rho| - sum_i |z_i| c_i)`.
    pub charge_bound_violation: f64,
    /// `max |div_h u|`.
    pub div_u_max: f64,
    /// Smallest concentration of any species.
    pub min_c: f64,
    /// Running `int ||rho||_2^4 dt`.
    pub b_running: f64,
    /// Running `int ||rho||_4^2 dt`.
    pub r_running: f64,
    /// Running `int ||u||_V^4 dt`.
    pub u_running: f64,
    /// Running integral of the dissipation of the Lyapunov functional.
    pub dissipation_running: f64,
    /// `||u||_H^2`.
    pub h_norm_sq: f64,
    /// `||grad u||^2`.
    pub grad_u_sq: f64,
    /// `int rho u . grad Phi`.
    pub rho_u_grad_phi: f64,
    /// `-<advection(u), u>_H`, zero outside Navier-Stokes mode.
    pub advection_energy: f64,
    /// `sum_i (1/2 D_i) ||q_i||^2`.
    pub l2_energy: f64,
    /// `sum_i ||grad q_i||^2`.
    pub grad_q_sq: f64,
    /// `(1/2 eps) int rho sum_i z_i q_i^2`.
    pub rho_zq2: f64,
    /// `sum_i (1/D_i) int F_i q_i`.
    pub forcing_q: f64,
    /// Error term of the entropy inequality.
    pub q1: f64,
    /// Error term of the potential-energy inequality.
    pub q2: f64,
    /// `(1/2) int (S^2 + Z^2)`.
    pub sz_energy: f64,
    /// `D int (|grad S|^2 + |grad Z|^2)`.
    pub sz_grad: f64,
    /// `(D/eps) int S Z rho`.
    pub sz_rho: f64,
    /// `int (S F_S + Z F_Z)`.
    pub sz_forcing: f64,
}

/// Time-independent fields derived from the boundary data.
#[derive(Debug, Clone)]
pub struct StaticTerms {
    grad_gamma: Vec<FaceField>,
    gamma_face: Vec<FaceField>,
    grad_log_gamma: Vec<FaceField>,
    grad_gamma_cells: Vec<[CellField; 3]>,
    lap_gamma: Vec<CellField>,
    grad_phi_w: FaceField,
    gamma_z: CellField,
}

impl StaticTerms {
    /// Precomputes gradients of `Gamma_i`, `log Gamma_i` and `Phi_W`.
    pub fn new(grid: &Grid, boundary: &BoundaryData, params: &SimParams) -> Result<Self> {
        let mut grad_gamma = Vec::new();
        let mut gamma_face = Vec::new();
        let mut grad_log_gamma = Vec::new();
        let mut grad_gamma_cells = Vec::new();
        let mut lap_gamma = Vec::new();
        for (gi, tr) in boundary.big_gamma.iter().zip(&boundary.gamma) {
            if gi.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Scope("boundary extension must be positive"));
            }
            let bc = ScalarBc::Dirichlet(tr);
            let gg = face_gradient(grid, gi, bc);
            lap_gamma.push(divergence(grid, &gg));
            grad_gamma.push(gg);
            gamma_face.push(face_average(grid, gi, bc));
            let log_field: CellField = gi.iter().map(|v| math::ln(*v)).collect();
            let log_trace = tr.map(grid, math::ln);
            grad_log_gamma.push(face_gradient(grid, &log_field, ScalarBc::Dirichlet(&log_trace)));
            grad_gamma_cells.push(cell_gradient(grid, gi, bc));
        }
        let grad_phi_w = face_gradient(grid, &boundary.phi_w, ScalarBc::Dirichlet(&boundary.w));
        let zs: Vec<f64> = params.species.iter().map(|s| s.valence as f64).collect();
        Ok(StaticTerms {
            grad_gamma,
            gamma_face,
            grad_log_gamma,
            grad_gamma_cells,
            lap_gamma,
            grad_phi_w,
            gamma_z: boundary.extension_combination(&zs),
        })
    }
}

/// Fields of a state that several functionals share.
struct Dynamic {
    rho: CellField,
    rho_face: FaceField,
    grad_phi: FaceField,
    grad_phi0: FaceField,
    q: Vec<CellField>,
    grad_q: Vec<FaceField>,
    grad_c: Vec<FaceField>,
    c_face: Vec<FaceField>,
}

impl Dynamic {
    fn new(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<Self> {
        let m = params.species.len();
        if boundary.gamma.len() != m {
            return Err(Error::SpeciesMismatch {
                expected: m,
                found: boundary.gamma.len(),
            });
        }
        let rho = charge_density(&state.c, &params.species)?;
        let rho_face = face_average(grid, &rho, ScalarBc::Neumann);
        let grad_phi = face_gradient(grid, &state.phi, ScalarBc::Dirichlet(&boundary.w));
        let grad_phi0 = face_gradient(grid, &state.phi0, ScalarBc::Zero);
        let mut q = Vec::with_capacity(m);
        let mut grad_q = Vec::with_capacity(m);
        let mut grad_c = Vec::with_capacity(m);
        let mut c_face = Vec::with_capacity(m);
        for i in 0..m {
            let qi: CellField = state.c[i].iter().zip(&boundary.big_gamma[i]).map(|(c, g)| c - g).collect();
            grad_q.push(face_gradient(grid, &qi, ScalarBc::Zero));
            q.push(qi);
            let bc = ScalarBc::Dirichlet(&boundary.gamma[i]);
            grad_c.push(face_gradient(grid, &state.c[i], bc));
            c_face.push(face_average(grid, &state.c[i], bc));
        }
        Ok(Dynamic {
            rho,
            rho_face,
            grad_phi,
            grad_phi0,
            q,
            grad_q,
            grad_c,
            c_face,
        })
    }
}

/// `sum over faces of a * b * c * vol`; with `c` a MAC velocity only interior
/// faces contribute.
fn face_triple(grid: &Grid, a: &FaceField, b: &FaceField, c: &FaceField) -> f64 {
    let mut total = 0.0;
    for axis in 0..grid.dim() {
        for ((x, y), z) in a.comps[axis].iter().zip(&b.comps[axis]).zip(&c.comps[axis]) {
            total += x * y * z;
        }
    }
    total * grid.cell_volume()
}

fn weighted(grid: &Grid, w: &[f64], f: &[f64]) -> f64 {
    grid.cell_volume() * w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
}

fn relative_entropy(grid: &Grid, state: &State, boundary: &BoundaryData) -> f64 {
    let mut total = 0.0;
    for (c, g) in state.c.iter().zip(&boundary.big_gamma) {
        for (ci, gi) in c.iter().zip(g) {
            total += if *ci > 0.0 {
                ci * math::ln(ci / gi) - ci + gi
            } else {
                *gi
            };
        }
    }
    total * grid.cell_volume()
}

/// `(1/2 eps) int rho Phi_0` with `Phi_0` taken from the state.
pub fn potential_energy_p(grid: &Grid, state: &State, params: &SimParams) -> Result<f64> {
    let rho = charge_density(&state.c, &params.species)?;
    Ok(0.5 * weighted(grid, &rho, &state.phi0))
}

/// `(1/2 eps) int rho (-Laplacian_D)^{-1} rho` by one Poisson solve.
pub fn potential_energy_from_rho(ws: &mut PoissonWorkspace, rho: &[f64], epsilon: f64) -> Result<f64> {
    let grid = ws.grid().clone();
    let phi0 = solve_poisson_dirichlet(ws, rho, &BoundaryTrace::zero(&grid), epsilon)?;
    Ok(0.5 * weighted(&grid, rho, &phi0))
}

/// Relative entropy of the concentrations plus the potential energy.
pub fn energy_e1(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    check_nonnegative(&state.c)?;
    Ok(relative_entropy(grid, state, boundary) + potential_energy_p(grid, state, params)?)
}

fn d1_from(grid: &Grid, state: &State, dynm: &Dynamic, params: &SimParams) -> (f64, u64) {
    let d = params.min_diffusivity();
    let gphi2 = face_sq_to_cells(grid, &dynm.grad_phi);
    let mut floor = 0;
    let mut acc = 0.0;
    for (i, sp) in params.species.iter().enumerate() {
        let z2 = (sp.valence * sp.valence) as f64;
        let gc2 = face_sq_to_cells(grid, &dynm.grad_c[i]);
        for k in 0..gc2.len() {
            let c = state.c[i][k];
            if c < D1_FLOOR {
                floor += 1;
            } else {
                acc += gc2[k] / c;
            }
            acc += z2 * c * gphi2[k];
        }
    }
    let rho2: f64 = dynm.rho.iter().map(|r| r * r).sum();
    (0.5 * d * grid.cell_volume() * (acc + rho2 / params.epsilon), floor)
}

/// Entropy dissipation and the number of cells where the `1/c` term was
/// dropped.
pub fn dissipation_d1(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<(f64, u64)> {
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    Ok(d1_from(grid, state, &dynm, params))
}

fn d2_from(grid: &Grid, state: &State, dynm: &Dynamic, params: &SimParams) -> f64 {
    let gphi2 = face_sq_to_cells(grid, &dynm.grad_phi);
    let mut acc = 0.0;
    for (i, sp) in params.species.iter().enumerate() {
        let w = (sp.valence * sp.valence) as f64 * sp.diffusivity;
        acc += w * weighted(grid, &state.c[i], &gphi2);
    }
    0.5 * acc
}

/// `(1/2) sum_i z_i^2 D_i int c_i |grad Phi|^2`.
pub fn dissipation_d2(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    Ok(d2_from(grid, state, &dynm, params))
}

fn require_two_species(params: &SimParams) -> Result<()> {
    if params.species.len() != 2 {
        return Err(Error::Scope("functional is defined for two species"));
    }
    Ok(())
}

/// `sum_i (1/D_i) ||c_i - Gamma_i||^2` for two species.
pub fn energy_e3(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    require_two_species(params)?;
    let mut acc = 0.0;
    for (i, sp) in params.species.iter().enumerate() {
        let q2: f64 = state.c[i]
            .iter()
            .zip(&boundary.big_gamma[i])
            .map(|(c, g)| (c - g) * (c - g))
            .sum();
        acc += q2 / sp.diffusivity;
    }
    Ok(acc * grid.cell_volume())
}

fn grad_sq_integral(grid: &Grid, g: &FaceField) -> f64 {
    integrate(grid, &face_sq_to_cells(grid, g))
}

fn l3_cubed(grid: &Grid, rho: &[f64]) -> f64 {
    grid.cell_volume() * rho.iter().map(|r| math::abs(*r) * r * r).sum::<f64>()
}

/// `sum_i (1/2) ||grad q_i||^2 + (1/4 eps) ||rho||_3^3` for two species.
pub fn dissipation_d3(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    require_two_species(params)?;
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    let g: f64 = dynm.grad_q.iter().map(|gq| grad_sq_integral(grid, gq)).sum();
    Ok(0.5 * g + l3_cubed(grid, &dynm.rho) / (4.0 * params.epsilon))
}

/// `(1/2K) ||u||_H^2`.
pub fn kinetic_energy(grid: &Grid, u: &FaceField, params: &SimParams) -> f64 {
    h_inner(grid, u, u) / (2.0 * params.coupling_k)
}

/// `(1/2K) ||u||_H^2 + P + delta E3`.
pub fn lyapunov_f(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Scope("delta must be positive"));
    }
    let e3 = energy_e3(grid, state, boundary, params)?;
    Ok(kinetic_energy(grid, &state.u, params) + potential_energy_p(grid, state, params)? + delta * e3)
}

fn sz_fields(state: &State, boundary: &BoundaryData, params: &SimParams) -> (CellField, CellField) {
    let n = state.phi.len();
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    for (i, sp) in params.species.iter().enumerate() {
        let zi = sp.valence as f64;
        for k in 0..n {
            let q = state.c[i][k] - boundary.big_gamma[i][k];
            s[k] += q;
            z[k] += zi * q;
        }
    }
    (s, z)
}

/// `(1/2K) ||u||_H^2 + P + delta int (S^2 + Z^2)` in equal-diffusivity mode.
pub fn lyapunov_g(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams, delta: f64) -> Result<f64> {
    if !params.equal_diffusivity_mode {
        return Err(Error::Scope("equal-diffusivity mode is not enabled"));
    }
    if !(delta > 0.0) {
        return Err(Error::Scope("delta must be positive"));
    }
    let (s, z) = sz_fields(state, boundary, params);
    let sq = weighted(grid, &s, &s) + weighted(grid, &z, &z);
    Ok(kinetic_energy(grid, &state.u, params) + potential_energy_p(grid, state, params)? + delta * sq)
}

/// `sum_i int F(c_i)` with `F(y) = y^{2m}` for `y < 0` and zero otherwise.
pub fn negativity_functional(grid: &Grid, c: &[CellField], exponent_m: u32) -> f64 {
    let p = 2 * exponent_m.max(1);
    let s: f64 = c
        .iter()
        .flat_map(|f| f.iter())
        .filter(|v| **v < 0.0)
        .map(|v| math::powi(*v, p))
        .sum();
    s * grid.cell_volume()
}

/// `max over cells of |rho| - sum_i |z_i| c_i`; nonpositive for
/// nonnegative concentrations.
pub fn charge_bound_violation(c: &[CellField], params: &SimParams) -> Result<f64> {
    let rho = charge_density(c, &params.species)?;
    let mut worst = f64::NEG_INFINITY;
    for (k, r) in rho.iter().enumerate() {
        let total: f64 = c
            .iter()
            .zip(&params.species)
            .map(|(f, sp)| math::abs(sp.valence as f64) * f[k])
            .sum();
        worst = worst.max(math::abs(*r) - total);
    }
    Ok(worst)
}

/// `F_i = -u . grad Gamma_i + D_i div(grad Gamma_i + z_i Gamma_i grad Phi)`.
fn forcing_from(grid: &Grid, stat: &StaticTerms, dynm: &Dynamic, u_cells: &[CellField; 3], params: &SimParams) -> Vec<CellField> {
    let mut out = Vec::with_capacity(params.species.len());
    for (i, sp) in params.species.iter().enumerate() {
        let z = sp.valence as f64;
        let mut drift = stat.gamma_face[i].clone();
        for axis in 0..grid.dim() {
            for (d, g) in drift.comps[axis].iter_mut().zip(&dynm.grad_phi.comps[axis]) {
                *d *= z * g;
            }
        }
        let div_drift = divergence(grid, &drift);
        let gc = &stat.grad_gamma_cells[i];
        let f: CellField = (0..div_drift.len())
            .map(|k| {
                let mut adv = 0.0;
                for a in 0..grid.dim() {
                    adv += u_cells[a][k] * gc[a][k];
                }
                -adv + sp.diffusivity * (stat.lap_gamma[i][k] + div_drift[k])
            })
            .collect();
        out.push(f);
    }
    out
}

/// Forcing `F_i` of the deviation equations for every species.
pub fn forcing_fi(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<Vec<CellField>> {
    let stat = StaticTerms::new(grid, boundary, params)?;
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    let uc = faces_to_cells(grid, &state.u);
    Ok(forcing_from(grid, &stat, &dynm, &uc, params))
}

fn q1_from(grid: &Grid, state: &State, stat: &StaticTerms, dynm: &Dynamic, params: &SimParams) -> f64 {
    let d = params.min_diffusivity();
    let eps = params.epsilon;
    let mut total = 0.0;
    for (i, sp) in params.species.iter().enumerate() {
        let z = sp.valence as f64;
        let mut g = stat.grad_log_gamma[i].clone();
        g.axpy(z, &stat.grad_phi_w);
        total += 0.5 * sp.diffusivity * weighted(grid, &state.c[i], &face_sq_to_cells(grid, &g));
        total -= face_triple(grid, &dynm.c_face[i], &state.u, &stat.grad_log_gamma[i]);
        total -= d * z * integrate(grid, &face_dot_to_cells(grid, &stat.grad_gamma[i], &dynm.grad_phi));
    }
    total -= face_triple(grid, &dynm.rho_face, &state.u, &stat.grad_phi_w);
    let gz = &stat.gamma_z;
    total += d / (2.0 * eps) * weighted(grid, gz, gz);
    total
}

fn q2_from(grid: &Grid, state: &State, stat: &StaticTerms, dynm: &Dynamic, params: &SimParams) -> f64 {
    let eps = params.epsilon;
    let gw2 = face_sq_to_cells(grid, &stat.grad_phi_w);
    let mut total = 0.0;
    for (i, sp) in params.species.iter().enumerate() {
        let z = sp.valence as f64;
        let di = sp.diffusivity;
        total -= di * z / eps * weighted(grid, &dynm.q[i], &dynm.rho);
        total += 0.5 * z * z * di * weighted(grid, &state.c[i], &gw2);
        total -= di * z * integrate(grid, &face_dot_to_cells(grid, &stat.grad_gamma[i], &dynm.grad_phi0));
    }
    total -= face_triple(grid, &dynm.rho_face, &state.u, &stat.grad_phi_w);
    total
}

/// Error term of the entropy inequality.
pub fn error_term_q1(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    let ctx = DiagnosticsContext::new(grid, boundary, params, DEFAULT_DELTA, DEFAULT_NEGATIVITY_EXPONENT)?;
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    Ok(q1_from(grid, state, &ctx.stat, &dynm, params))
}

/// Error term of the potential-energy inequality.
pub fn error_term_q2(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    let ctx = DiagnosticsContext::new(grid, boundary, params, DEFAULT_DELTA, DEFAULT_NEGATIVITY_EXPONENT)?;
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    Ok(q2_from(grid, state, &ctx.stat, &dynm, params))
}

/// `int rho u . grad Phi` over interior faces; equals `-<u, f>_H / K` for the
/// electric force `f`.
pub fn rho_u_grad_phi(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<f64> {
    let dynm = Dynamic::new(grid, state, boundary, params)?;
    Ok(face_triple(grid, &dynm.rho_face, &state.u, &dynm.grad_phi))
}

/// Everything needed to produce [`DiagnosticsRecord`]s for one run.
#[derive(Debug, Clone)]
pub struct DiagnosticsContext {
    grid: Grid,
    params: SimParams,
    delta: f64,
    negativity_exponent: u32,
    stat: StaticTerms,
}

impl DiagnosticsContext {
    /// Context for a run with Lyapunov weight `delta`.
    pub fn new(
        grid: &Grid,
        boundary: &BoundaryData,
        params: &SimParams,
        delta: f64,
        negativity_exponent: u32,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Scope("delta must be positive"));
        }
        if boundary.gamma.len() != params.species.len() {
            return Err(Error::SpeciesMismatch {
                expected: params.species.len(),
                found: boundary.gamma.len(),
            });
        }
        let stat = StaticTerms::new(grid, boundary, params)?;
        Ok(DiagnosticsContext {
            grid: grid.clone(),
            params: params.clone(),
            delta,
            negativity_exponent,
            stat,
        })
    }

    /// Lyapunov weight.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Evaluates every functional on `state`. Running monitors are left at
    /// zero for the caller to fill.
    pub fn record(&self, state: &State, boundary: &BoundaryData) -> Result<DiagnosticsRecord> {
        let grid = &self.grid;
        let params = &self.params;
        check_nonnegative(&state.c)?;
        let dynm = Dynamic::new(grid, state, boundary, params)?;
        let m = params.species.len();
        let eps = params.epsilon;
        let vol = grid.cell_volume();

        let p = 0.5 * weighted(grid, &dynm.rho, &state.phi0);
        let e1 = relative_entropy(grid, state, boundary) + p;
        let (d1, floor) = d1_from(grid, state, &dynm, params);
        let d2 = d2_from(grid, state, &dynm, params);

        let grad_q_sq_each: Vec<f64> = dynm.grad_q.iter().map(|g| grad_sq_integral(grid, g)).collect();
        let q_sq_each: Vec<f64> = dynm.q.iter().map(|q| weighted(grid, q, q)).collect();
        let l3 = l3_cubed(grid, &dynm.rho);

        let h_norm_sq = h_inner(grid, &state.u, &state.u);
        let kinetic = h_norm_sq / (2.0 * params.coupling_k);
        let grad_u_sq = dirichlet_energy(grid, &state.u);
        let rugp = face_triple(grid, &dynm.rho_face, &state.u, &dynm.grad_phi);
        let adv = if params.flow_mode == FlowMode::NavierStokes {
            advection_energy(grid, &state.u)
        } else {
            0.0
        };

        let (e3, d3, f_lyap) = if m == 2 {
            let e3 = q_sq_each
                .iter()
                .zip(&params.species)
                .map(|(q, s)| q / s.diffusivity)
                .sum::<f64>();
            let d3 = 0.5 * grad_q_sq_each.iter().sum::<f64>() + l3 / (4.0 * eps);
            (e3, d3, kinetic + p + self.delta * e3)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };

        let u_cells = faces_to_cells(grid, &state.u);
        let forcing = forcing_from(grid, &self.stat, &dynm, &u_cells, params);
        let mut l2_energy = 0.0;
        let mut forcing_q = 0.0;
        let mut zq2 = vec![0.0; dynm.rho.len()];
        for (i, sp) in params.species.iter().enumerate() {
            l2_energy += q_sq_each[i] / (2.0 * sp.diffusivity);
            forcing_q += weighted(grid, &forcing[i], &dynm.q[i]) / sp.diffusivity;
            let z = sp.valence as f64;
            for (a, q) in zq2.iter_mut().zip(&dynm.q[i]) {
                *a += z * q * q;
            }
        }
        let rho_zq2 = weighted(grid, &dynm.rho, &zq2) / (2.0 * eps);

        let (g_lyap, sz_energy, sz_grad, sz_rho, sz_forcing) = if params.equal_diffusivity_mode {
            let (s, z) = sz_fields(state, boundary, params);
            let sq = weighted(grid, &s, &s) + weighted(grid, &z, &z);
            let d = params.species[0].diffusivity;
            let gs = face_gradient(grid, &s, ScalarBc::Zero);
            let gz = face_gradient(grid, &z, ScalarBc::Zero);
            let sz_grad = d * (grad_sq_integral(grid, &gs) + grad_sq_integral(grid, &gz));
            let szr: f64 = (0..s.len()).map(|k| s[k] * z[k] * dynm.rho[k]).sum::<f64>() * vol;
            let mut fs = vec![0.0; s.len()];
            let mut fz = vec![0.0; s.len()];
            for (i, sp) in params.species.iter().enumerate() {
                let zi = sp.valence as f64;
                for k in 0..s.len() {
                    fs[k] += forcing[i][k];
                    fz[k] += zi * forcing[i][k];
                }
            }
            let sf = weighted(grid, &s, &fs) + weighted(grid, &z, &fz);
            (kinetic + p + self.delta * sq, 0.5 * sq, sz_grad, d / eps * szr, sf)
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        };

        let min_c = state.c.iter().flatten().fold(f64::INFINITY, |a, b| a.min(*b));
        let div_u_max = velocity_divergence(grid, &state.u)
            .iter()
            .fold(0.0f64, |a, b| a.max(math::abs(*b)));

        Ok(DiagnosticsRecord {
            step: state.step,
            t: state.t,
            e1,
            d1,
            d1_floor_cells: floor,
            p,
            d2,
            e3,
            d3,
            f_lyap,
            g_lyap,
            kinetic,
            norm_rho_l2: lp_norm(grid, &dynm.rho, 2),
            norm_rho_l3: math::pow(l3, 1.0 / 3.0),
            norm_rho_l4: lp_norm(grid, &dynm.rho, 4),
            q_l2: q_sq_each.iter().map(|v| math::sqrt(*v)).collect(),
            grad_q_l2: grad_q_sq_each.iter().map(|v| math::sqrt(*v)).collect(),
            u_v: math::sqrt(grad_u_sq),
            negativity: negativity_functional(grid, &state.c, self.negativity_exponent),
            charge_bound_violation: charge_bound_violation(&state.c, params)?,
            div_u_max,
            min_c,
            b_running: 0.0,
            r_running: 0.0,
            u_running: 0.0,
            dissipation_running: 0.0,
            h_norm_sq,
            grad_u_sq,
            rho_u_grad_phi: rugp,
            advection_energy: adv,
            l2_energy,
            grad_q_sq: grad_q_sq_each.iter().sum(),
            rho_zq2,
            forcing_q,
            q1: q1_from(grid, state, &self.stat, &dynm, params),
            q2: q2_from(grid, state, &self.stat, &dynm, params),
            sz_energy,
            sz_grad,
            sz_rho,
            sz_forcing,
        })
    }

    /// Integrand of the running dissipation monitor:
    /// `(nu/2K) ||grad u||^2 + (delta/2) sum_i ||grad q_i||^2 + (delta/4 eps) ||rho||_3^3`.
    pub fn dissipation_integrand(&self, rec: &DiagnosticsRecord) -> f64 {
        let p = &self.params;
        p.nu / (2.0 * p.coupling_k) * rec.grad_u_sq
            + 0.5 * self.delta * rec.grad_q_sq
            + self.delta / (4.0 * p.epsilon) * math::powi(rec.norm_rho_l3, 3)
    }
}
