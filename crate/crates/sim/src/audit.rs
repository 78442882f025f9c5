//! Post-hoc audit of a results directory.
//!
//! Reads `config.ini` and `timeseries.csv` (which must hold every step, so
//! `output_every = 1`) and writes `audit.txt` plus per-step residuals and
//! margins in `audit_steps.csv`.

use std::fmt::Write as _;
use std::path::Path;

use npns_core::audit::{boundedness_excess, relative_curvature, AuditReport};
use npns_core::diagnostics::DiagnosticsRecord;

use crate::config::{load_config, RunSpec};
use crate::error::{Result, SimError};
use crate::run::{read_timeseries, CONFIG, TIMESERIES};

/// Plain-text report.
pub const AUDIT_TEXT: &str = "audit.txt";
/// Per-step CSV.
pub const AUDIT_STEPS: &str = "audit_steps.csv";

/// Constant `C` of `tol_audit = C (dt + h^2)` used when none is given. The
/// refinement suite of the standard run has no negative margin, so the
/// calibrated constant is zero and the default audit is strict.
pub const DEFAULT_C_AUDIT: f64 = 0.0;

/// Audit of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAudit {
    /// Identities and margins.
    pub report: AuditReport,
    /// Largest step size in the history.
    pub dt: f64,
    /// Mesh width.
    pub h: f64,
    /// `C` used for the tolerance.
    pub c_audit: f64,
    /// Relative curvature of `B` over the final half.
    pub b_curvature: Option<f64>,
    /// Relative curvature of the dissipation integral over the final half.
    pub dissipation_curvature: Option<f64>,
    /// Excess of the Lyapunov functional in the second half over the first.
    pub lyapunov_excess: Option<f64>,
}

impl RunAudit {
    /// Audits `history` of a run of `spec`.
    pub fn new(spec: &RunSpec, history: &[DiagnosticsRecord], c_audit: f64) -> Result<Self> {
        if history.len() < 2 {
            return Err(SimError::Config("audit needs at least two consecutive records".into()));
        }
        let dt = history.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max);
        let h = spec.mesh_width();
        let report = AuditReport::new(history, &spec.params, c_audit, dt, h)?;
        let t: Vec<f64> = history.iter().map(|r| r.t).collect();
        let curvature = |f: fn(&DiagnosticsRecord) -> f64| {
            let v: Vec<f64> = history.iter().map(f).collect();
            relative_curvature(&t, &v)
        };
        let lyap: Vec<f64> = history
            .iter()
            .map(|r| if spec.params.equal_diffusivity_mode { r.g_lyap } else { r.f_lyap })
            .collect();
        Ok(RunAudit {
            report,
            dt,
            h,
            c_audit,
            b_curvature: curvature(|r| r.b_running),
            dissipation_curvature: curvature(|r| r.dissipation_running),
            lyapunov_excess: boundedness_excess(&t, &lyap, 1e-6),
        })
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let r = &self.report;
        let id = &r.identities;
        let iq = &r.inequalities;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        let mut s = String::new();
        let _ = writeln!(s, "steps audited          {}", id.steps.len());
        let _ = writeln!(s, "dt (max)               {:.6e}", self.dt);
        let _ = writeln!(s, "h                      {:.6e}", self.h);
        let _ = writeln!(s, "C_audit                {:.6e}", self.c_audit);
        let _ = writeln!(s, "tol_audit              {:.6e}", r.tol_audit);
        let _ = writeln!(s);
        let _ = writeln!(s, "max |r_ens|            {:.6e}", id.max_ens);
        let _ = writeln!(s, "max |r_l2|             {:.6e}", id.max_l2);
        let _ = writeln!(s, "max |r_sz|             {:.6e}", id.max_sz);
        let _ = writeln!(s, "max advection energy   {:.6e}", id.max_advection_energy);
        let _ = writeln!(s);
        let _ = writeln!(s, "min m1                 {:.6e}", iq.min_m1);
        let _ = writeln!(s, "min m2                 {:.6e}", iq.min_m2);
        let _ = writeln!(s, "max charge violation   {:.6e}", iq.max_charge);
        let _ = writeln!(s, "margins                {}", if r.margins_pass() { "pass" } else { "FAIL" });
        let _ = writeln!(s);
        let _ = writeln!(s, "B curvature            {}", opt(self.b_curvature));
        let _ = writeln!(s, "dissipation curvature  {}", opt(self.dissipation_curvature));
        let _ = writeln!(s, "Lyapunov excess        {}", opt(self.lyapunov_excess));
        s
    }

    /// Writes the per-step table.
    pub fn write_steps(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "t", "dt", "r_ens", "r_l2", "r_sz", "advection_energy", "m1", "m2", "charge"])?;
        let f = |v: f64| format!("{v:.16e}");
        for (a, b) in self.report.identities.steps.iter().zip(&self.report.inequalities.steps) {
            w.write_record([
                a.step.to_string(),
                f(a.t),
                f(a.dt),
                f(a.r_ens),
                f(a.r_l2),
                f(a.r_sz),
                f(a.advection_energy),
                f(b.m1),
                f(b.m2),
                f(b.charge),
            ])?;
        }
        w.flush().map_err(SimError::io(path))?;
        Ok(())
    }
}

/// Audits the run stored in `dir` and writes the report files next to it.
pub fn audit_dir(dir: &Path, c_audit: f64) -> Result<RunAudit> {
    let spec = load_config(&dir.join(CONFIG))?;
    let history = read_timeseries(&dir.join(TIMESERIES), spec.params.species.len())?;
    let audit = RunAudit::new(&spec, &history, c_audit)?;
    let text = dir.join(AUDIT_TEXT);
    std::fs::write(&text, audit.to_text()).map_err(SimError::io(&text))?;
    audit.write_steps(&dir.join(AUDIT_STEPS))?;
    Ok(audit)
}
