//! Balance-law audits over recorded histories and the time-integrated
//! regularity monitors.
//!
//! Every audit works on consecutive [`DiagnosticsRecord`]s. Time derivatives
//! are forward differences `(X^{n+1} - X^n) / dt` paired with the remaining
//! terms at level `n`, which matches the forward-Euler step.

use alloc::vec::Vec;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::math;
use crate::params::SimParams;

/// Trapezoidal running integrals of the regularity quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMonitors {
    /// `int ||rho||_2^4 dt`.
    pub b: f64,
    /// `int ||rho||_4^2 dt`.
    pub r: f64,
    /// `int ||u||_V^4 dt`.
    pub u: f64,
    /// Integral of the Lyapunov dissipation.
    pub dissipation: f64,
    /// Time and integrands of the previous sample.
    pub last: Option<(f64, [f64; 4])>,
}

/// Integrands `(||rho||_2^4, ||rho||_4^2, ||u||_V^4)` of a record.
pub fn monitor_integrands(rec: &DiagnosticsRecord) -> [f64; 3] {
    [
        math::powi(rec.norm_rho_l2, 4),
        math::powi(rec.norm_rho_l4, 2),
        math::powi(rec.u_v, 4),
    ]
}

impl RunningMonitors {
    /// Adds the sample at time `t` and returns the updated totals.
    pub fn push(&mut self, t: f64, integrands: [f64; 3], dissipation: f64) -> [f64; 4] {
        let now = [integrands[0], integrands[1], integrands[2], dissipation];
        if let Some((t0, prev)) = self.last {
            let half = 0.5 * (t - t0);
            self.b += half * (prev[0] + now[0]);
            self.r += half * (prev[1] + now[1]);
            self.u += half * (prev[2] + now[2]);
            self.dissipation += half * (prev[3] + now[3]);
        }
        self.last = Some((t, now));
        [self.b, self.r, self.u, self.dissipation]
    }
}

fn check_sorted(history: &[DiagnosticsRecord]) -> Result<()> {
    for (index, w) in history.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::UnsortedHistory { index: index + 1 });
        }
    }
    Ok(())
}

fn check_consecutive(history: &[DiagnosticsRecord]) -> Result<()> {
    check_sorted(history)?;
    for (index, w) in history.windows(2).enumerate() {
        if w[1].step != w[0].step + 1 {
            return Err(Error::MissingSnapshots { index });
        }
    }
    Ok(())
}

/// Running `(B, R, U)` at every record of a time-sorted history.
pub fn regularity_monitors(history: &[DiagnosticsRecord]) -> Result<Vec<[f64; 3]>> {
    check_sorted(history)?;
    let mut acc = RunningMonitors::default();
    Ok(history
        .iter()
        .map(|rec| {
            let v = acc.push(rec.t, monitor_integrands(rec), 0.0);
            [v[0], v[1], v[2]]
        })
        .collect())
}

/// Residuals of the exact balance laws over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResiduals {
    /// Step index `n`.
    pub step: u64,
    /// Time `t_n`.
    pub t: f64,
    /// `t_{n+1} - t_n`.
    pub dt: f64,
    /// Kinetic energy balance.
    pub r_ens: f64,
    /// `L^2` identity of the deviations `q_i`.
    pub r_l2: f64,
    /// `(S, Z)` balance (`NaN` outside equal-diffusivity mode).
    pub r_sz: f64,
    /// Advection energy exchange at level `n` (must be nonpositive).
    pub advection_energy: f64,
}

/// Per-step residuals with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityAudit {
    /// One entry per step.
    pub steps: Vec<StepResiduals>,
    /// `max |r_ens|`.
    pub max_ens: f64,
    /// `max |r_l2|`.
    pub max_l2: f64,
    /// `max |r_sz|` (`NaN` outside equal-diffusivity mode).
    pub max_sz: f64,
    /// Largest advection energy exchange (must be `<= 0` up to rounding).
    pub max_advection_energy: f64,
}

/// Residuals of the kinetic-energy balance, the `L^2` identity for the
/// deviations and the `(S, Z)` balance.
pub fn audit_exact_identities(history: &[DiagnosticsRecord], params: &SimParams) -> Result<IdentityAudit> {
    check_consecutive(history)?;
    let k = params.coupling_k;
    let mut steps = Vec::with_capacity(history.len().saturating_sub(1));
    for w in history.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let r_ens = (b.h_norm_sq - a.h_norm_sq) / (2.0 * k * dt) + params.nu / k * a.grad_u_sq + a.rho_u_grad_phi
            - a.advection_energy / k;
        let r_l2 = (b.l2_energy - a.l2_energy) / dt + a.grad_q_sq + a.rho_zq2 - a.forcing_q;
        let r_sz = (b.sz_energy - a.sz_energy) / dt + a.sz_grad + a.sz_rho - a.sz_forcing;
        steps.push(StepResiduals {
            step: a.step,
            t: a.t,
            dt,
            r_ens,
            r_l2,
            r_sz,
            advection_energy: a.advection_energy,
        });
    }
    let max_abs = |f: fn(&StepResiduals) -> f64| steps.iter().fold(0.0f64, |m, s| m.max(math::abs(f(s))));
    let max_sz = if params.equal_diffusivity_mode {
        max_abs(|s| s.r_sz)
    } else {
        f64::NAN
    };
    Ok(IdentityAudit {
        max_ens: max_abs(|s| s.r_ens),
        max_l2: max_abs(|s| s.r_l2),
        max_sz,
        max_advection_energy: steps.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.advection_energy)),
        steps,
    })
}

/// Margins of the one-sided balances over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMargins {
    /// Step index `n`.
    pub step: u64,
    /// Time `t_n`.
    pub t: f64,
    /// `t_{n+1} - t_n`.
    pub dt: f64,
    /// `Q_1 + int rho u.grad Phi - (dE_1/dt + D_1)`.
    pub m1: f64,
    /// `Q_2 + int rho u.grad Phi - (dP/dt + D_2)`.
    pub m2: f64,
    /// `max(|rho| - sum c_i)` at level `n`.
    pub charge: f64,
}

/// Per-step margins with their minima.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityAudit {
    /// One entry per step.
    pub steps: Vec<StepMargins>,
    /// Smallest `m1`.
    pub min_m1: f64,
    /// Smallest `m2`.
    pub min_m2: f64,
    /// Largest charge-bound violation over all records.
    pub max_charge: f64,
}

/// Margins of the entropy and potential-energy inequalities and the
/// pointwise charge bound.
pub fn audit_inequalities(history: &[DiagnosticsRecord], _params: &SimParams) -> Result<InequalityAudit> {
    check_consecutive(history)?;
    let mut steps = Vec::with_capacity(history.len().saturating_sub(1));
    for w in history.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let m1 = a.q1 + a.rho_u_grad_phi - ((b.e1 - a.e1) / dt + a.d1);
        let m2 = a.q2 + a.rho_u_grad_phi - ((b.p - a.p) / dt + a.d2);
        steps.push(StepMargins {
            step: a.step,
            t: a.t,
            dt,
            m1,
            m2,
            charge: a.charge_bound_violation,
        });
    }
    Ok(InequalityAudit {
        min_m1: steps.iter().fold(f64::INFINITY, |m, s| m.min(s.m1)),
        min_m2: steps.iter().fold(f64::INFINITY, |m, s| m.min(s.m2)),
        max_charge: history
            .iter()
            .fold(f64::NEG_INFINITY, |m, r| m.max(r.charge_bound_violation)),
        steps,
    })
}

/// Full audit of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// Exact identities.
    pub identities: IdentityAudit,
    /// One-sided balances.
    pub inequalities: InequalityAudit,
    /// Tolerance `C (dt + h^2)` applied to the margins.
    pub tol_audit: f64,
}

impl AuditReport {
    /// Audits `history` with the calibrated constant `c_audit`, step `dt` and
    /// spacing `h`.
    pub fn new(history: &[DiagnosticsRecord], params: &SimParams, c_audit: f64, dt: f64, h: f64) -> Result<Self> {
        Ok(AuditReport {
            identities: audit_exact_identities(history, params)?,
            inequalities: audit_inequalities(history, params)?,
            tol_audit: audit_tolerance(c_audit, dt, h),
        })
    }

    /// Whether both margins clear `-tol_audit`.
    pub fn margins_pass(&self) -> bool {
        self.inequalities.min_m1 >= -self.tol_audit && self.inequalities.min_m2 >= -self.tol_audit
    }
}

/// `tol_audit = C (dt + h^2)`.
pub fn audit_tolerance(c: f64, dt: f64, h: f64) -> f64 {
    c * (dt + h * h)
}

/// Calibration constant `C`: twice the largest `|r| / (dt + h^2)` over
/// `(residual, dt, h)` samples from a refinement study.
pub fn calibrate_audit_constant(samples: &[(f64, f64, f64)]) -> f64 {
    2.0 * samples
        .iter()
        .map(|(r, dt, h)| math::abs(*r) / (dt + h * h))
        .fold(0.0, f64::max)
}

/// Observed order `log(e_coarse / e_fine) / log(s_coarse / s_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, s_coarse: f64, s_fine: f64) -> f64 {
    math::ln(e_coarse / e_fine) / math::ln(s_coarse / s_fine)
}

/// Least-squares fit `v ~ a + b t + c t^2`; returns `(a, b, c)`.
pub fn quadratic_fit(t: &[f64], v: &[f64]) -> Option<(f64, f64, f64)> {
    let n = t.len();
    if n < 3 || v.len() != n {
        return None;
    }
    let t0 = t.iter().sum::<f64>() / n as f64;
    let mut s = [0.0; 5];
    let mut r = [0.0; 3];
    for (ti, vi) in t.iter().zip(v) {
        let x = ti - t0;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                r[k] += p * vi;
            }
            p *= x;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let (a, b, c) = solve3(m, r)?;
    // Back to the uncentered basis.
    Some((a - b * t0 + c * t0 * t0, b - 2.0 * c * t0, c))
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<(f64, f64, f64)> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| math::abs(m[a][col]).total_cmp(&math::abs(m[b][col])))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = r[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some((x[0], x[1], x[2]))
}

/// Relative curvature of `v(t)` over the final half `[T/2, T]`:
/// `|c| L^2 / |v(T) - v(T/2)|` with `c` the quadratic coefficient of the
/// least-squares fit on that window and `L = T/2` its length.
pub fn relative_curvature(t: &[f64], v: &[f64]) -> Option<f64> {
    let t_end = *t.last()?;
    let t_start = *t.first()?;
    let mid = 0.5 * (t_start + t_end);
    let from = t.iter().position(|x| *x >= mid)?;
    let (tw, vw) = (&t[from..], &v[from..]);
    let (_, _, c) = quadratic_fit(tw, vw)?;
    let len = t_end - tw[0];
    let rise = math::abs(vw[vw.len() - 1] - vw[0]);
    Some(math::abs(c) * len * len / rise)
}

/// `max_{t >= T/2} v - max_{t < T/2} v - slack * (v(0) + 1)`; nonpositive when
/// the second half stays below the first.
pub fn boundedness_excess(t: &[f64], v: &[f64], slack: f64) -> Option<f64> {
    let t_end = *t.last()?;
    let t_start = *t.first()?;
    let mid = 0.5 * (t_start + t_end);
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for (ti, vi) in t.iter().zip(v) {
        if *ti < mid {
            first = first.max(*vi);
        } else {
            second = second.max(*vi);
        }
    }
    Some(second - first - slack * (v[0] + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(step: u64, t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            step,
            t,
            e1: 0.0,
            d1: 0.0,
            d1_floor_cells: 0,
            p: 0.0,
            d2: 0.0,
            e3: 0.0,
            d3: 0.0,
            f_lyap: 0.0,
            g_lyap: f64::NAN,
            kinetic: 0.0,
            norm_rho_l2: 0.0,
            norm_rho_l3: 0.0,
            norm_rho_l4: 0.0,
            q_l2: vec![],
            grad_q_l2: vec![],
            u_v: 0.0,
            negativity: 0.0,
            charge_bound_violation: -1.0,
            div_u_max: 0.0,
            min_c: 1.0,
            b_running: 0.0,
            r_running: 0.0,
            u_running: 0.0,
            dissipation_running: 0.0,
            h_norm_sq: 0.0,
            grad_u_sq: 0.0,
            rho_u_grad_phi: 0.0,
            advection_energy: 0.0,
            l2_energy: 0.0,
            grad_q_sq: 0.0,
            rho_zq2: 0.0,
            forcing_q: 0.0,
            q1: 0.0,
            q2: 0.0,
            sz_energy: f64::NAN,
            sz_grad: f64::NAN,
            sz_rho: f64::NAN,
            sz_forcing: f64::NAN,
        }
    }

    #[test]
    fn zero_charge_history_has_zero_monitors() {
        let h: Vec<_> = (0..5).map(|k| blank(k, k as f64 * 0.1)).collect();
        for v in regularity_monitors(&h).unwrap() {
            assert_eq!(v, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn constant_norm_integrates_exactly() {
        let a: f64 = 2.5;
        let h: Vec<_> = (0..7)
            .map(|k| {
                let mut r = blank(k, 0.3 * k as f64);
                r.norm_rho_l2 = a.sqrt();
                r
            })
            .collect();
        let b = regularity_monitors(&h).unwrap().last().unwrap()[0];
        assert!((b - a * a * 1.8).abs() < 1e-12);
    }

    #[test]
    fn unsorted_history_rejected() {
        let h = vec![blank(0, 0.0), blank(1, 0.2), blank(2, 0.1)];
        assert_eq!(regularity_monitors(&h).unwrap_err(), Error::UnsortedHistory { index: 2 });
        let g = vec![blank(0, 0.0), blank(2, 0.2)];
        let p = crate::params::SimParams {
            epsilon: 1.0,
            nu: 1.0,
            coupling_k: 1.0,
            species: vec![],
            flow_mode: crate::params::FlowMode::Stokes,
            equal_diffusivity_mode: false,
        };
        assert_eq!(audit_exact_identities(&g, &p).unwrap_err(), Error::MissingSnapshots { index: 0 });
    }

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let t: Vec<f64> = (0..20).map(|k| 0.5 + 0.05 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 1.0 - 2.0 * x + 0.3 * x * x).collect();
        let (a, b, c) = quadratic_fit(&t, &v).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && (b + 2.0).abs() < 1e-9 && (c - 0.3).abs() < 1e-10);
    }

    #[test]
    fn linear_growth_has_no_curvature() {
        let t: Vec<f64> = (0..=100).map(|k| 0.01 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!(relative_curvature(&t, &v).unwrap() < 1e-10);
        let w: Vec<f64> = t.iter().map(|x| x * x).collect();
        // c L^2 / rise = 0.25 / 0.75 on [0.5, 1].
        assert!((relative_curvature(&t, &w).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn decaying_series_is_bounded() {
        let t: Vec<f64> = (0..=100).map(|k| 0.01 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 1.0 + (-3.0 * x).exp()).collect();
        assert!(boundedness_excess(&t, &v, 1e-6).unwrap() <= 0.0);
        let up: Vec<f64> = t.iter().map(|x| *x).collect();
        assert!(boundedness_excess(&t, &up, 1e-6).unwrap() > 0.0);
    }

    #[test]
    fn orders_and_calibration() {
        assert!((observed_order(4.0, 1.0, 0.2, 0.1) - 2.0).abs() < 1e-14);
        let c = calibrate_audit_constant(&[(1e-3, 1e-3, 0.0), (3e-3, 1e-3, 0.0)]);
        assert!((c - 6.0).abs() < 1e-12);
        assert!((audit_tolerance(2.0, 0.1, 0.1) - 0.22).abs() < 1e-15);
    }
}
