//! The time loop, time-series output and restart.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use npns_core::audit::{
    audit_exact_identities, audit_inequalities, monitor_integrands, RunningMonitors,
};
use npns_core::diagnostics::{DiagnosticsContext, DiagnosticsRecord};
use npns_core::field::BoundaryTrace;
use npns_core::{build_grid, extend_boundary_data, BoundaryData, CellField, Grid, State, Stepper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::{DtChoice, RunSpec};
use crate::error::{Result, SimError};

/// Time-series file name.
pub const TIMESERIES: &str = "timeseries.csv";
/// Effective configuration file name.
pub const CONFIG: &str = "config.ini";
/// Run summary file name.
pub const SUMMARY: &str = "summary.json";

/// Grid of a spec.
pub fn spec_grid(spec: &RunSpec) -> Result<Grid> {
    Ok(build_grid(spec.grid.dim, &spec.grid.extents, &spec.grid.cells)?)
}

fn trace(grid: &Grid, e: &crate::expr::Expr, what: &str) -> Result<BoundaryTrace> {
    let t = BoundaryTrace::from_fn(grid, |x| e.eval(x).unwrap_or(f64::NAN));
    if t.values(grid).iter().any(|v| !v.is_finite()) {
        return Err(SimError::Config(format!("{what} is not finite on the boundary")));
    }
    Ok(t)
}

/// Boundary traces of a spec and their harmonic extensions.
pub fn spec_boundary(spec: &RunSpec, grid: &Grid) -> Result<BoundaryData> {
    let gamma = spec
        .species
        .iter()
        .enumerate()
        .map(|(i, s)| trace(grid, &s.gamma, &format!("species{}.gamma", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let w = trace(grid, &spec.w, "potential.w")?;
    Ok(extend_boundary_data(grid, gamma, w, spec.boundary_tol)?)
}

/// Initial concentrations: the configured expressions, then the seeded
/// multiplicative perturbation. Warns when the data disagree with the
/// boundary traces.
pub fn initial_concentrations(spec: &RunSpec, grid: &Grid, bd: &BoundaryData) -> Result<Vec<CellField>> {
    let centers = grid.cell_centers();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.species.len());
    for (i, s) in spec.species.iter().enumerate() {
        let e = &s.initial;
        if let Some(n) = e.file_len() {
            if n != grid.cell_count() {
                return Err(SimError::Config(format!(
                    "species{}.initial: file has {n} values, grid has {} cells",
                    i + 1,
                    grid.cell_count()
                )));
            }
        }
        let mut c = Vec::with_capacity(centers.len());
        for (k, x) in centers.iter().enumerate() {
            let mut v = e.eval_with(*x, Some(k), bd.big_gamma[i][k])?;
            if spec.perturbation > 0.0 {
                v *= 1.0 + spec.perturbation * rng.gen_range(-1.0..1.0);
            }
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!(
                    "species{}.initial must be positive, found {v} at cell {k}",
                    i + 1
                )));
            }
            c.push(v);
        }
        if e.file_len().is_none() {
            let mut worst = 0.0f64;
            grid.for_each_boundary_face(|axis, _side, _cell, face| {
                let x = grid.face_center(axis, grid.face_coords(axis, face));
                let g = bd.gamma[i].at(axis, face);
                if let Ok(v) = e.eval_with(x, None, g) {
                    worst = worst.max((v - g).abs());
                }
            });
            if worst > 1e-8 {
                warn!(
                    "species{}: initial data differ from the boundary trace by up to {worst:.3e}",
                    i + 1
                );
            }
        }
        out.push(c);
    }
    Ok(out)
}

/// A run in progress.
#[derive(Debug)]
pub struct Simulation {
    spec: RunSpec,
    stepper: Stepper,
    ctx: DiagnosticsContext,
    state: State,
    monitors: RunningMonitors,
    last_rate: f64,
}

impl Simulation {
    /// Fresh run at `t = 0`.
    pub fn new(spec: &RunSpec) -> Result<Self> {
        let grid = spec_grid(spec)?;
        let bd = spec_boundary(spec, &grid)?;
        let c = initial_concentrations(spec, &grid, &bd)?;
        let mut stepper = Stepper::new(&grid, &spec.params, bd.clone(), spec.tolerances)?;
        let state = stepper.initial_state(c)?;
        Self::assemble(spec, stepper, state, RunningMonitors::default())
    }

    /// Continues from a checkpoint written by a run of the same spec.
    pub fn from_checkpoint(spec: &RunSpec, cp: Checkpoint) -> Result<Self> {
        let grid = spec_grid(spec)?;
        cp.check_compatible(&grid, &spec.params)?;
        let bd = spec_boundary(spec, &grid)?;
        let stepper = Stepper::new(&grid, &spec.params, bd, spec.tolerances)?;
        Self::assemble(spec, stepper, cp.state, cp.monitors)
    }

    /// Run driven by a prepared stepper and state.
    pub fn from_parts(spec: &RunSpec, stepper: Stepper, state: State) -> Result<Self> {
        Self::assemble(spec, stepper, state, RunningMonitors::default())
    }

    fn assemble(spec: &RunSpec, stepper: Stepper, state: State, monitors: RunningMonitors) -> Result<Self> {
        let ctx = DiagnosticsContext::new(
            stepper.grid(),
            stepper.boundary(),
            &spec.params,
            spec.delta,
            spec.negativity_exponent,
        )?;
        Ok(Simulation {
            spec: spec.clone(),
            stepper,
            ctx,
            state,
            monitors,
            last_rate: f64::INFINITY,
        })
    }

    /// Current state.
    pub fn state(&self) -> &State {
        &self.state
    }

    /// Stepper of the run.
    pub fn stepper(&mut self) -> &mut Stepper {
        &mut self.stepper
    }

    /// Running monitors up to the last recorded state.
    pub fn monitors(&self) -> &RunningMonitors {
        &self.monitors
    }

    /// Largest `|dc/dt|` of the last step.
    pub fn last_rate(&self) -> f64 {
        self.last_rate
    }

    /// Diagnostics of the current state. Updates the running monitors, so
    /// call it once per state.
    pub fn record(&mut self) -> Result<DiagnosticsRecord> {
        let step = self.state.step;
        let mut rec = self
            .ctx
            .record(&self.state, self.stepper.boundary())
            .map_err(SimError::at_step(step))?;
        let totals = self
            .monitors
            .push(rec.t, monitor_integrands(&rec), self.ctx.dissipation_integrand(&rec));
        rec.b_running = totals[0];
        rec.r_running = totals[1];
        rec.u_running = totals[2];
        rec.dissipation_running = totals[3];
        Ok(rec)
    }

    /// Largest stable step for the current state, capped at `dt_max`.
    pub fn suggested_dt(&self, dt_max: f64) -> f64 {
        self.stepper.suggested_dt(&self.state, dt_max)
    }

    /// Step size of the next step, clipped to land on the final time.
    pub fn next_dt(&self) -> f64 {
        let dt = match self.spec.dt {
            DtChoice::Auto => self.stepper.suggested_dt(&self.state, self.spec.dt_max),
            DtChoice::Fixed(dt) => dt,
        };
        dt.min(self.spec.t_final - self.state.t)
    }

    /// Advances by `dt`.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        let step = self.state.step;
        let next = self.stepper.step(&self.state, dt).map_err(SimError::at_step(step))?;
        self.last_rate = next
            .c
            .iter()
            .flatten()
            .zip(self.state.c.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / dt;
        self.state = next;
        Ok(())
    }

    /// Snapshot for restart.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.stepper.grid(), &self.spec.params, &self.state, &self.monitors)
    }

    /// Why the run should stop now, if it should.
    pub fn stop_reason(&self) -> Option<StopReason> {
        let s = &self.spec;
        if s.t_final - self.state.t <= 1e-12 * s.t_final {
            return Some(StopReason::FinalTime);
        }
        if s.max_steps.is_some_and(|m| self.state.step >= m) {
            return Some(StopReason::MaxSteps);
        }
        if s.steady_tol > 0.0 && self.last_rate < s.steady_tol {
            return Some(StopReason::Steady);
        }
        None
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Reached `t_final`.
    FinalTime,
    /// Hit `max_steps`.
    MaxSteps,
    /// Concentrations stopped changing.
    Steady,
}

impl StopReason {
    /// Name used in summaries.
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::FinalTime => "final_time",
            StopReason::MaxSteps => "max_steps",
            StopReason::Steady => "steady",
        }
    }
}

/// Extremes and totals of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Steps taken from `t = 0`.
    pub steps: u64,
    /// Time reached.
    pub t: f64,
    /// Why the loop ended.
    pub stop: StopReason,
    /// Smallest concentration over every recorded state.
    pub min_c: f64,
    /// Largest negativity functional.
    pub max_negativity: f64,
    /// Largest pointwise charge-bound violation.
    pub max_charge_violation: f64,
    /// Largest velocity divergence.
    pub max_div_u: f64,
    /// Final running monitors `B, R, U` and dissipation.
    pub monitors: [f64; 4],
    /// Largest kinetic-balance residual.
    pub max_r_ens: f64,
    /// Largest L2-balance residual.
    pub max_r_l2: f64,
    /// Smallest entropy-balance margin.
    pub min_m1: f64,
    /// Smallest potential-balance margin.
    pub min_m2: f64,
}

impl Summary {
    fn to_json(&self) -> serde_json::Value {
        let num = |v: f64| if v.is_finite() { json!(v) } else { json!(v.to_string()) };
        json!({
            "steps": self.steps,
            "t": num(self.t),
            "stop": self.stop.as_str(),
            "min_c": num(self.min_c),
            "max_negativity": num(self.max_negativity),
            "max_charge_violation": num(self.max_charge_violation),
            "max_div_u": num(self.max_div_u),
            "b": num(self.monitors[0]),
            "r": num(self.monitors[1]),
            "u": num(self.monitors[2]),
            "dissipation": num(self.monitors[3]),
            "max_r_ens": num(self.max_r_ens),
            "max_r_l2": num(self.max_r_l2),
            "min_m1": num(self.min_m1),
            "min_m2": num(self.min_m2),
        })
    }
}

/// Outcome of [`run_simulation`].
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Record of every state visited by this invocation.
    pub history: Vec<DiagnosticsRecord>,
    /// Last state.
    pub final_state: State,
    /// Extremes and totals.
    pub summary: Summary,
}

/// Header of the time series for `m` species.
pub fn csv_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "step", "t", "e1", "d1", "d1_floor_cells", "p", "d2", "e3", "d3", "f_lyap", "g_lyap", "kinetic",
        "norm_rho_l2", "norm_rho_l3", "norm_rho_l4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=m).map(|i| format!("q_l2_{i}")));
    h.extend((1..=m).map(|i| format!("grad_q_l2_{i}")));
    h.extend(
        [
            "u_v",
            "negativity",
            "charge_bound_violation",
            "div_u_max",
            "min_c",
            "b_running",
            "r_running",
            "u_running",
            "dissipation_running",
            "h_norm_sq",
            "grad_u_sq",
            "rho_u_grad_phi",
            "advection_energy",
            "l2_energy",
            "grad_q_sq",
            "rho_zq2",
            "forcing_q",
            "q1",
            "q2",
            "sz_energy",
            "sz_grad",
            "sz_rho",
            "sz_forcing",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// One time-series row; floats carry 17 significant digits.
pub fn csv_row(r: &DiagnosticsRecord) -> Vec<String> {
    let mut row = vec![r.step.to_string()];
    row.extend(
        [
            r.t, r.e1, r.d1,
        ]
        .map(fmt_f),
    );
    row.push(r.d1_floor_cells.to_string());
    row.extend(
        [
            r.p, r.d2, r.e3, r.d3, r.f_lyap, r.g_lyap, r.kinetic, r.norm_rho_l2, r.norm_rho_l3, r.norm_rho_l4,
        ]
        .map(fmt_f),
    );
    row.extend(r.q_l2.iter().map(|v| fmt_f(*v)));
    row.extend(r.grad_q_l2.iter().map(|v| fmt_f(*v)));
    row.extend(
        [
            r.u_v,
            r.negativity,
            r.charge_bound_violation,
            r.div_u_max,
            r.min_c,
            r.b_running,
            r.r_running,
            r.u_running,
            r.dissipation_running,
            r.h_norm_sq,
            r.grad_u_sq,
            r.rho_u_grad_phi,
            r.advection_energy,
            r.l2_energy,
            r.grad_q_sq,
            r.rho_zq2,
            r.forcing_q,
            r.q1,
            r.q2,
            r.sz_energy,
            r.sz_grad,
            r.sz_rho,
            r.sz_forcing,
        ]
        .map(fmt_f),
    );
    row
}

/// Inverse of [`csv_row`].
pub fn parse_row(row: &csv::StringRecord, m: usize) -> Result<DiagnosticsRecord> {
    let expected = csv_header(m).len();
    if row.len() != expected {
        return Err(SimError::Config(format!(
            "time-series row has {} fields, expected {expected}",
            row.len()
        )));
    }
    let mut it = row.iter();
    let mut f = || -> Result<f64> {
        let s = it.next().unwrap_or("");
        s.parse::<f64>()
            .map_err(|_| SimError::Config(format!("bad number `{s}` in time series")))
    };
    let step = f()? as u64;
    let t = f()?;
    let e1 = f()?;
    let d1 = f()?;
    let d1_floor_cells = f()? as u64;
    let mut g = || f();
    let (p, d2, e3, d3, f_lyap, g_lyap, kinetic) = (g()?, g()?, g()?, g()?, g()?, g()?, g()?);
    let (norm_rho_l2, norm_rho_l3, norm_rho_l4) = (g()?, g()?, g()?);
    let q_l2 = (0..m).map(|_| g()).collect::<Result<Vec<_>>>()?;
    let grad_q_l2 = (0..m).map(|_| g()).collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsRecord {
        step,
        t,
        e1,
        d1,
        d1_floor_cells,
        p,
        d2,
        e3,
        d3,
        f_lyap,
        g_lyap,
        kinetic,
        norm_rho_l2,
        norm_rho_l3,
        norm_rho_l4,
        q_l2,
        grad_q_l2,
        u_v: g()?,
        negativity: g()?,
        charge_bound_violation: g()?,
        div_u_max: g()?,
        min_c: g()?,
        b_running: g()?,
        r_running: g()?,
        u_running: g()?,
        dissipation_running: g()?,
        h_norm_sq: g()?,
        grad_u_sq: g()?,
        rho_u_grad_phi: g()?,
        advection_energy: g()?,
        l2_energy: g()?,
        grad_q_sq: g()?,
        rho_zq2: g()?,
        forcing_q: g()?,
        q1: g()?,
        q2: g()?,
        sz_energy: g()?,
        sz_grad: g()?,
        sz_rho: g()?,
        sz_forcing: g()?,
    })
}

/// Reads a time series written by [`run_simulation`].
pub fn read_timeseries(path: &Path, m: usize) -> Result<Vec<DiagnosticsRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != csv_header(m) {
        return Err(SimError::Config(format!(
            "{}: header does not match a {m}-species run",
            path.display()
        )));
    }
    rdr.records().map(|r| parse_row(&r?, m)).collect()
}

struct Output {
    dir: PathBuf,
    csv: csv::Writer<BufWriter<File>>,
}

impl Output {
    fn create(dir: &Path, spec: &RunSpec) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(SimError::io(dir))?;
        let cfg = dir.join(CONFIG);
        std::fs::write(&cfg, spec.to_ini()).map_err(SimError::io(&cfg))?;
        let path = dir.join(TIMESERIES);
        let file = File::create(&path).map_err(SimError::io(&path))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(file));
        csv.write_record(csv_header(spec.params.species.len()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            csv,
        })
    }

    /// Keeps the header and every row up to `step`, then appends.
    fn reopen(dir: &Path, spec: &RunSpec, step: u64) -> Result<Self> {
        let path = dir.join(TIMESERIES);
        let kept = read_timeseries(&path, spec.params.species.len())?;
        let file = File::create(&path).map_err(SimError::io(&path))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(file));
        csv.write_record(csv_header(spec.params.species.len()))?;
        for r in kept.iter().filter(|r| r.step <= step) {
            csv.write_record(csv_row(r))?;
        }
        Ok(Output {
            dir: dir.to_path_buf(),
            csv,
        })
    }

    fn finish(mut self, summary: &Summary) -> Result<()> {
        self.csv.flush().map_err(SimError::io(self.dir.join(TIMESERIES)))?;
        let path = self.dir.join(SUMMARY);
        let text = serde_json::to_string_pretty(&summary.to_json()).unwrap_or_default();
        let mut f = File::create(&path).map_err(SimError::io(&path))?;
        writeln!(f, "{text}").map_err(SimError::io(&path))?;
        Ok(())
    }
}

/// Runs `spec` from `t = 0`, writing into `out` when given.
pub fn run_simulation(spec: &RunSpec, out: Option<&Path>) -> Result<RunResult> {
    let sim = Simulation::new(spec)?;
    let output = out.map(|d| Output::create(d, spec)).transpose()?;
    drive(spec, sim, output, false)
}

/// Continues the run stored in `dir` from the checkpoint file `checkpoint`.
/// The time series is truncated to the checkpoint step and extended.
pub fn resume_simulation(dir: &Path, checkpoint: &Path) -> Result<RunResult> {
    let spec = crate::config::load_config(&dir.join(CONFIG))?;
    let cp = Checkpoint::load(checkpoint)?;
    let step = cp.state.step;
    let sim = Simulation::from_checkpoint(&spec, cp)?;
    let output = Output::reopen(dir, &spec, step)?;
    drive(&spec, sim, Some(output), true)
}

/// Newest checkpoint in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Result<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(SimError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("checkpoint_") && n.ends_with(".npns"))
        })
        .collect();
    found.sort();
    found
        .pop()
        .ok_or_else(|| SimError::Checkpoint(format!("no checkpoint in {}", dir.display())))
}

fn drive(spec: &RunSpec, mut sim: Simulation, mut output: Option<Output>, resumed: bool) -> Result<RunResult> {
    let mut history = Vec::new();
    let mut skip_record = resumed;
    let stop = loop {
        let step = sim.state().step;
        if !skip_record {
            let rec = sim.record()?;
            let stopping = sim.stop_reason().is_some();
            if let Some(out) = output.as_mut() {
                if step % spec.output_every == 0 || stopping {
                    out.csv.write_record(csv_row(&rec))?;
                }
                if spec.checkpoint_every > 0 && step % spec.checkpoint_every == 0 {
                    out.csv.flush().map_err(SimError::io(out.dir.join(TIMESERIES)))?;
                    let path = sim.checkpoint().save(&out.dir)?;
                    debug!("wrote {}", path.display());
                }
            }
            history.push(rec);
        }
        skip_record = false;
        if let Some(reason) = sim.stop_reason() {
            break reason;
        }
        let dt = sim.next_dt();
        sim.advance(dt)?;
        if sim.state().step % 1000 == 0 {
            info!("step {} t = {:.6}", sim.state().step, sim.state().t);
        }
    };
    let summary = summarize(spec, &sim, &history, stop)?;
    if let Some(out) = output {
        out.finish(&summary)?;
    }
    Ok(RunResult {
        history,
        final_state: sim.state().clone(),
        summary,
    })
}

fn summarize(spec: &RunSpec, sim: &Simulation, history: &[DiagnosticsRecord], stop: StopReason) -> Result<Summary> {
    let fold_max = |f: fn(&DiagnosticsRecord) -> f64| history.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let (max_r_ens, max_r_l2, min_m1, min_m2) = if history.len() >= 2 {
        let ids = audit_exact_identities(history, &spec.params)?;
        let ineq = audit_inequalities(history, &spec.params)?;
        (ids.max_ens, ids.max_l2, ineq.min_m1, ineq.min_m2)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    let m = sim.monitors();
    Ok(Summary {
        steps: sim.state().step,
        t: sim.state().t,
        stop,
        min_c: history.iter().map(|r| r.min_c).fold(f64::INFINITY, f64::min),
        max_negativity: fold_max(|r| r.negativity),
        max_charge_violation: fold_max(|r| r.charge_bound_violation),
        max_div_u: fold_max(|r| r.div_u_max),
        monitors: [m.b, m.r, m.u, m.dissipation],
        max_r_ens,
        max_r_l2,
        min_m1,
        min_m2,
    })
}
