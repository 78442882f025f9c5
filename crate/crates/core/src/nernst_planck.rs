//! Explicit Nernst-Planck step with Scharfetter-Gummel fluxes and upwind
//! advection, and the equivalent sum/difference formulation for species of
//! equal diffusivity and unit valence.
//!
//! On a face between cells `L` and `R` with `s = z (Phi_R - Phi_L)` the
//! diffusive-drift flux is
//!
//! ```text
//! J = (D/h) [ B(s) c_L - B(-s) c_R ],    B(s) = s / (e^s - 1),
//! ```
//!
//! which vanishes on Boltzmann profiles `c ~ exp(-z Phi)`. Boundary faces see
//! the ghost values `2 gamma - c` and `2 W - Phi`.

use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::field::{BoundaryTrace, CellField, FaceField};
use crate::grid::Grid;
use crate::math::{self, bernoulli_even, bernoulli_pair};
use crate::params::{SimParams, Species};
use crate::state::{check_nonnegative, State};
use crate::stencil::divergence;

/// Safety factor in [`stable_dt`].
pub const SAFETY: f64 = 0.9;

/// Per-species face fluxes (diffusion, drift and advection).
#[derive(Debug, Clone, PartialEq)]
pub struct IonFluxes {
    /// One face field per species.
    pub flux: Vec<FaceField>,
}

/// Values on both sides of a face, with ghosts substituted on the boundary.
#[inline]
fn sides(
    field: &[f64],
    trace: &BoundaryTrace,
    axis: usize,
    face: usize,
    lo: Option<usize>,
    hi: Option<usize>,
) -> (f64, f64) {
    match (lo, hi) {
        (Some(l), Some(r)) => (field[l], field[r]),
        (None, Some(r)) => (2.0 * trace.at(axis, face) - field[r], field[r]),
        (Some(l), None) => (field[l], 2.0 * trace.at(axis, face) - field[l]),
        (None, None) => (0.0, 0.0),
    }
}

#[inline]
fn upwind(u: f64, left: f64, right: f64) -> f64 {
    if u > 0.0 {
        u * left
    } else {
        u * right
    }
}

/// Total flux of one species through every face.
pub fn np_face_flux(
    grid: &Grid,
    c: &[f64],
    phi: &[f64],
    u: &FaceField,
    species: Species,
    gamma: &BoundaryTrace,
    w: &BoundaryTrace,
) -> FaceField {
    let mut out = FaceField::zeros(grid);
    let z = species.valence as f64;
    let h = grid.spacing();
    grid.for_each_face(|axis, face, lo, hi| {
        let (cl, cr) = sides(c, gamma, axis, face, lo, hi);
        let (pl, pr) = sides(phi, w, axis, face, lo, hi);
        let s = z * (pr - pl);
        let k = species.diffusivity / h[axis];
        let adv = match (lo, hi) {
            (Some(_), Some(_)) => upwind(u.comps[axis][face], cl, cr),
            _ => 0.0,
        };
        let (bp, bm) = bernoulli_pair(s);
        out.comps[axis][face] = k * (bp * cl - bm * cr) + adv;
    });
    out
}

/// Fluxes of every species for the current state.
pub fn ion_fluxes(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<IonFluxes> {
    check_species(state, boundary, params)?;
    let flux = params
        .species
        .iter()
        .zip(&state.c)
        .zip(&boundary.gamma)
        .map(|((sp, c), g)| np_face_flux(grid, c, &state.phi, &state.u, *sp, g, &boundary.w))
        .collect();
    Ok(IonFluxes { flux })
}

fn check_species(state: &State, boundary: &BoundaryData, params: &SimParams) -> Result<()> {
    let m = params.species.len();
    for found in [state.c.len(), boundary.gamma.len()] {
        if found != m {
            return Err(Error::SpeciesMismatch { expected: m, found });
        }
    }
    Ok(())
}

/// Largest `dt` for which the explicit update keeps every concentration
/// nonnegative: the reciprocal of the largest total outflow rate of a cell.
pub fn max_positive_dt(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams) -> f64 {
    let h = grid.spacing();
    let mut worst: f64 = 0.0;
    let mut rate = vec![0.0; grid.cell_count()];
    for sp in &params.species {
        let z = sp.valence as f64;
        rate.iter_mut().for_each(|r| *r = 0.0);
        grid.for_each_face(|axis, face, lo, hi| {
            let (pl, pr) = sides(&state.phi, &boundary.w, axis, face, lo, hi);
            let s = z * (pr - pl);
            let k = sp.diffusivity / (h[axis] * h[axis]);
            let un = state.u.comps[axis][face];
            let (bp, bm) = bernoulli_pair(s);
            match (lo, hi) {
                (Some(l), Some(r)) => {
                    rate[l] += k * bp + un.max(0.0) / h[axis];
                    rate[r] += k * bm + (-un).max(0.0) / h[axis];
                }
                (None, Some(c)) | (Some(c), None) => {
                    rate[c] += k * (bp + bm);
                }
                (None, None) => {}
            }
        });
        worst = rate.iter().fold(worst, |m, r| m.max(*r));
    }
    if worst > 0.0 {
        1.0 / worst
    } else {
        f64::INFINITY
    }
}

/// Time step from the diffusive-drift and advective constraints:
///
/// `SAFETY * min_i min(h^2 / (2 d D_i (1 + max|s_i| / 2)), h / max|u|)`,
/// capped at `dt_max`. `h` is the smallest spacing and `s_i` ranges over all
/// faces.
pub fn stable_dt(grid: &Grid, state: &State, boundary: &BoundaryData, params: &SimParams, dt_max: f64) -> f64 {
    let h = grid.min_spacing();
    let d = grid.dim() as f64;
    let mut max_dphi: f64 = 0.0;
    grid.for_each_face(|axis, face, lo, hi| {
        let (pl, pr) = sides(&state.phi, &boundary.w, axis, face, lo, hi);
        max_dphi = max_dphi.max(math::abs(pr - pl));
    });
    let mut dt = f64::INFINITY;
    for sp in &params.species {
        let s = math::abs(sp.valence as f64) * max_dphi;
        dt = dt.min(h * h / (2.0 * d * sp.diffusivity * (1.0 + 0.5 * s)));
    }
    let umax = state.u.max_abs();
    if umax > 0.0 {
        dt = dt.min(h / umax);
    }
    (SAFETY * dt).min(dt_max)
}

/// One forward-Euler step `c_i - dt div_h J_i (+ dt source_i)`.
///
/// Rejects negative input and any `dt` above [`max_positive_dt`].
pub fn advance_concentrations(
    grid: &Grid,
    state: &State,
    boundary: &BoundaryData,
    params: &SimParams,
    dt: f64,
    sources: Option<&[CellField]>,
) -> Result<Vec<CellField>> {
    check_species(state, boundary, params)?;
    check_nonnegative(&state.c)?;
    let limit = max_positive_dt(grid, state, boundary, params);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::TimeStepTooLarge { dt, limit });
    }
    let fluxes = ion_fluxes(grid, state, boundary, params)?;
    let mut out = Vec::with_capacity(state.c.len());
    for (i, (c, j)) in state.c.iter().zip(&fluxes.flux).enumerate() {
        let div = divergence(grid, j);
        let mut next: CellField = c.iter().zip(&div).map(|(c, d)| c - dt * d).collect();
        if let Some(src) = sources {
            for (n, s) in next.iter_mut().zip(&src[i]) {
                *n += dt * s;
            }
        }
        out.push(next);
    }
    Ok(out)
}

/// Sum and charge-weighted sum of the deviations `q_i = c_i - Gamma_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SzState {
    /// `S = sum_i q_i`.
    pub s: CellField,
    /// `Z = sum_i z_i q_i`.
    pub z: CellField,
    /// `Gamma_S = sum_i Gamma_i`.
    pub gamma_s: CellField,
    /// `Gamma_Z = sum_i z_i Gamma_i`.
    pub gamma_z: CellField,
}

impl SzState {
    /// Forms `(S, Z)` from concentrations.
    pub fn from_concentrations(c: &[CellField], boundary: &BoundaryData, params: &SimParams) -> Result<Self> {
        let m = params.species.len();
        if c.len() != m {
            return Err(Error::SpeciesMismatch {
                expected: m,
                found: c.len(),
            });
        }
        let n = boundary.phi_w.len();
        let mut out = SzState {
            s: vec![0.0; n],
            z: vec![0.0; n],
            gamma_s: vec![0.0; n],
            gamma_z: vec![0.0; n],
        };
        for ((ci, gi), sp) in c.iter().zip(&boundary.big_gamma).zip(&params.species) {
            let zi = sp.valence as f64;
            for k in 0..n {
                let q = ci[k] - gi[k];
                out.s[k] += q;
                out.z[k] += zi * q;
                out.gamma_s[k] += gi[k];
                out.gamma_z[k] += zi * gi[k];
            }
        }
        Ok(out)
    }

    /// Inverts the transform for `m = 2`, `z = (+1, -1)`: returns `(q_1, q_2)`.
    pub fn to_pair(&self) -> (CellField, CellField) {
        let q1 = self.s.iter().zip(&self.z).map(|(s, z)| 0.5 * (s + z)).collect();
        let q2 = self.s.iter().zip(&self.z).map(|(s, z)| 0.5 * (s - z)).collect();
        (q1, q2)
    }
}

/// Fluxes of the coupled pair `(P, Q)` obeying
/// `dP/dt + div(u P) = D div(grad P + Q grad Phi)` and the same with `P`, `Q`
/// exchanged. Ghosts are `2 g - x` with the given traces.
#[allow(clippy::too_many_arguments)]
fn pair_flux(
    grid: &Grid,
    p: &[f64],
    q: &[f64],
    gp: &BoundaryTrace,
    gq: &BoundaryTrace,
    phi: &[f64],
    w: &BoundaryTrace,
    u: &FaceField,
    diffusivity: f64,
) -> (FaceField, FaceField) {
    let mut jp = FaceField::zeros(grid);
    let mut jq = FaceField::zeros(grid);
    let h = grid.spacing();
    grid.for_each_face(|axis, face, lo, hi| {
        let (pl, pr) = sides(p, gp, axis, face, lo, hi);
        let (ql, qr) = sides(q, gq, axis, face, lo, hi);
        let (fl, fr) = sides(phi, w, axis, face, lo, hi);
        let s = fr - fl;
        let a = bernoulli_even(s);
        let k = diffusivity / h[axis];
        let un = match (lo, hi) {
            (Some(_), Some(_)) => u.comps[axis][face],
            _ => 0.0,
        };
        jp.comps[axis][face] = k * (a * (pl - pr) - 0.5 * s * (ql + qr)) + upwind(un, pl, pr);
        jq.comps[axis][face] = k * (a * (ql - qr) - 0.5 * s * (pl + pr)) + upwind(un, ql, qr);
    });
    (jp, jq)
}

fn require_equal_diffusivity(params: &SimParams) -> Result<f64> {
    if !params.equal_diffusivity_mode {
        return Err(Error::Scope("equal-diffusivity mode is not enabled"));
    }
    params.validated()?;
    Ok(params.species[0].diffusivity)
}

/// Discrete forcings `(F_S, F_Z)`: the divergence of the pair flux of
/// `(Gamma_S, Gamma_Z)` with boundary data `(sum gamma_i, sum z_i gamma_i)`.
pub fn sz_forcing(
    grid: &Grid,
    sz: &SzState,
    phi: &[f64],
    u: &FaceField,
    boundary: &BoundaryData,
    params: &SimParams,
) -> Result<(CellField, CellField)> {
    let d = require_equal_diffusivity(params)?;
    let ones: Vec<f64> = vec![1.0; params.species.len()];
    let zs: Vec<f64> = params.species.iter().map(|s| s.valence as f64).collect();
    let gs = boundary.gamma_combination(grid, &ones);
    let gz = boundary.gamma_combination(grid, &zs);
    let (js, jz) = pair_flux(grid, &sz.gamma_s, &sz.gamma_z, &gs, &gz, phi, &boundary.w, u, d);
    let fs = divergence(grid, &js).into_iter().map(|v| -v).collect();
    let fz = divergence(grid, &jz).into_iter().map(|v| -v).collect();
    Ok((fs, fz))
}

/// One forward-Euler step of the `(S, Z)` system with the same fluxes as
/// [`advance_concentrations`].
pub fn advance_sz(
    grid: &Grid,
    sz: &SzState,
    phi: &[f64],
    u: &FaceField,
    boundary: &BoundaryData,
    params: &SimParams,
    dt: f64,
) -> Result<SzState> {
    let d = require_equal_diffusivity(params)?;
    let zero = BoundaryTrace::zero(grid);
    let (js, jz) = pair_flux(grid, &sz.s, &sz.z, &zero, &zero, phi, &boundary.w, u, d);
    let (fs, fz) = sz_forcing(grid, sz, phi, u, boundary, params)?;
    let ds = divergence(grid, &js);
    let dz = divergence(grid, &jz);
    let n = sz.s.len();
    let s = (0..n).map(|k| sz.s[k] - dt * ds[k] + dt * fs[k]).collect();
    let z = (0..n).map(|k| sz.z[k] - dt * dz[k] + dt * fz[k]).collect();
    Ok(SzState {
        s,
        z,
        gamma_s: sz.gamma_s.clone(),
        gamma_z: sz.gamma_z.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::extend_boundary_data;
    use crate::field::sample_cells;
    use crate::grid::build_grid;
    use crate::params::FlowMode;
    use crate::poisson::PoissonWorkspace;

    fn params(d: [f64; 2]) -> SimParams {
        SimParams {
            epsilon: 0.5,
            nu: 1.0,
            coupling_k: 1.0,
            species: vec![
                Species {
                    valence: 1,
                    diffusivity: d[0],
                },
                Species {
                    valence: -1,
                    diffusivity: d[1],
                },
            ],
            flow_mode: FlowMode::Stokes,
            equal_diffusivity_mode: false,
        }
    }

    fn bare_state(grid: &Grid, c: Vec<CellField>, phi: CellField) -> State {
        State {
            t: 0.0,
            step: 0,
            c,
            phi0: vec![0.0; grid.cell_count()],
            phi,
            u: FaceField::zeros(grid),
            p: vec![0.0; grid.cell_count()],
        }
    }

    #[test]
    fn flat_potential_gives_central_diffusion() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let c = sample_cells(&g, |x| 1.0 + x[0] * x[0] + 0.3 * x[1]);
        let phi = vec![2.0; 64];
        let sp = Species {
            valence: 1,
            diffusivity: 0.7,
        };
        let gamma = BoundaryTrace::constant(&g, 1.0);
        let w = BoundaryTrace::constant(&g, 2.0);
        let j = np_face_flux(&g, &c, &phi, &FaceField::zeros(&g), sp, &gamma, &w);
        let h = 0.125;
        g.for_each_face(|axis, face, lo, hi| {
            if let (Some(l), Some(r)) = (lo, hi) {
                let central = -0.7 * (c[r] - c[l]) / h;
                assert!((j.comps[axis][face] - central).abs() < 1e-13);
            }
        });
    }

    #[test]
    fn boltzmann_profile_has_zero_flux() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        for z in [1, -1, 2] {
            let phi = sample_cells(&g, |x| 3.0 * x[0] - 2.0 * x[1]);
            let c: CellField = phi.iter().map(|p| (-(z as f64) * p).exp()).collect();
            let gamma = BoundaryTrace::from_fn(&g, |x| (-(z as f64) * (3.0 * x[0] - 2.0 * x[1])).exp());
            let w = BoundaryTrace::from_fn(&g, |x| 3.0 * x[0] - 2.0 * x[1]);
            let sp = Species {
                valence: z,
                diffusivity: 1.0,
            };
            let j = np_face_flux(&g, &c, &phi, &FaceField::zeros(&g), sp, &gamma, &w);
            g.for_each_face(|axis, face, lo, hi| {
                if lo.is_some() && hi.is_some() {
                    let scale = c[lo.unwrap()].max(c[hi.unwrap()]);
                    assert!(j.comps[axis][face].abs() <= 1e-12 * scale);
                }
            });
        }
    }

    #[test]
    fn linear_profile_constant_flux() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let c = sample_cells(&g, |x| 2.0 + x[0]);
        let gamma = BoundaryTrace::from_fn(&g, |x| 2.0 + x[0]);
        let w = BoundaryTrace::zero(&g);
        let sp = Species {
            valence: 1,
            diffusivity: 1.0,
        };
        let j = np_face_flux(&g, &c, &vec![0.0; 64], &FaceField::zeros(&g), sp, &gamma, &w);
        assert!(j.comps[0].iter().all(|v| (v + 1.0).abs() < 1e-12));
        assert!(j.comps[1].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stable_dt_definitional() {
        let g = build_grid(2, &[0.4, 0.4], &[4, 4]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0), BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::constant(&g, 3.0),
            1e-12,
        )
        .unwrap();
        let mut st = bare_state(&g, vec![vec![1.0; 16]; 2], vec![3.0; 16]);
        let p = params([1.0, 1.0]);
        let dt = stable_dt(&g, &st, &bd, &p, 1.0);
        assert!((dt - 0.00225).abs() < 1e-15);
        st.u = FaceField::from_fn(&g, |_, _| 1000.0);
        let a = stable_dt(&g, &st, &bd, &p, 1.0);
        st.u = FaceField::from_fn(&g, |_, _| 2000.0);
        let b = stable_dt(&g, &st, &bd, &p, 1.0);
        assert!((a - 2.0 * b).abs() < 1e-15);
        assert_eq!(stable_dt(&g, &bare_state(&g, vec![vec![1.0; 16]; 2], vec![3.0; 16]), &bd, &p, 1e-4), 1e-4);
    }

    #[test]
    fn uniform_neutral_state_is_fixed_point() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0), BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::constant(&g, 0.7),
            1e-12,
        )
        .unwrap();
        let p = params([1.0, 0.5]);
        let mut ws = PoissonWorkspace::new(&g, 1e-12).unwrap();
        let st = State::new(&g, vec![vec![1.0; 64]; 2], &bd, &p, &mut ws).unwrap();
        let dt = stable_dt(&g, &st, &bd, &p, 1.0).min(max_positive_dt(&g, &st, &bd, &p));
        let next = advance_concentrations(&g, &st, &bd, &p, dt, None).unwrap();
        for c in next {
            assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0), BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::zero(&g),
            1e-12,
        )
        .unwrap();
        let p = params([1.0, 1.0]);
        let st = bare_state(&g, vec![vec![1.0; 64]; 2], vec![0.0; 64]);
        let lim = max_positive_dt(&g, &st, &bd, &p);
        assert!(matches!(
            advance_concentrations(&g, &st, &bd, &p, 2.0 * lim, None),
            Err(Error::TimeStepTooLarge { .. })
        ));
        let mut neg = st.clone();
        neg.c[0][5] = -1e-6;
        assert!(matches!(
            advance_concentrations(&g, &neg, &bd, &p, 0.5 * lim, None),
            Err(Error::NegativeConcentration { species: 0, cell: 5, .. })
        ));
    }

    #[test]
    fn sz_requires_mode() {
        let g = build_grid(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0), BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::zero(&g),
            1e-12,
        )
        .unwrap();
        let p = params([1.0, 1.0]);
        let sz = SzState::from_concentrations(&[vec![1.0; 16], vec![1.0; 16]], &bd, &p).unwrap();
        let err = advance_sz(&g, &sz, &vec![0.0; 16], &FaceField::zeros(&g), &bd, &p, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Scope(_)));
    }

    #[test]
    fn sz_zero_state_stays_zero() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.5), BoundaryTrace::constant(&g, 1.5)],
            BoundaryTrace::constant(&g, 0.2),
            1e-12,
        )
        .unwrap();
        let mut p = params([1.0, 1.0]);
        p.equal_diffusivity_mode = true;
        let sz = SzState::from_concentrations(&bd.big_gamma.clone(), &bd, &p).unwrap();
        let next = advance_sz(&g, &sz, &bd.phi_w, &FaceField::zeros(&g), &bd, &p, 1e-3).unwrap();
        assert!(next.s.iter().chain(&next.z).all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn sz_decouples_without_charge() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0), BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::constant(&g, 0.0),
            1e-12,
        )
        .unwrap();
        let mut p = params([0.8, 0.8]);
        p.equal_diffusivity_mode = true;
        let bump = sample_cells(&g, |x| (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin());
        let c: Vec<CellField> = (0..2).map(|_| bump.iter().map(|b| 1.0 + b).collect()).collect();
        let mut sz = SzState::from_concentrations(&c, &bd, &p).unwrap();
        let phi = vec![0.0; 64];
        let u = FaceField::zeros(&g);
        for _ in 0..50 {
            sz = advance_sz(&g, &sz, &phi, &u, &bd, &p, 1e-3).unwrap();
        }
        assert!(sz.z.iter().all(|v| v.abs() < 1e-12));
        // Pure diffusion of S with zero boundary data.
        let mut s = bump.iter().map(|b| 2.0 * b).collect::<CellField>();
        for _ in 0..50 {
            let lap = crate::stencil::neg_laplacian(&g, &s, crate::stencil::ScalarBc::Zero);
            s = s.iter().zip(&lap).map(|(a, l)| a - 1e-3 * 0.8 * l).collect();
        }
        for (a, b) in s.iter().zip(&sz.s) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
