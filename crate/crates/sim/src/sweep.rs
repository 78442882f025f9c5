//! Parameter sweeps over the cross product of value lists.
//!
//! ```ini
//! [sweep]
//! template = base.ini        # run config, relative to this file
//! workers = 1                # concurrent runs
//! output_dir = sweep         # run_0000, run_0001, ... and summary.csv
//!
//! [ranges]
//! potential.w = linear(0, 1, 0); linear(0, 5, 0)
//! species1.diffusivity = 1; 0.5
//! ```
//!
//! Values are separated by `;`. A run that fails is recorded in the summary
//! and the remaining runs continue.

use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::parse_config_with;
use crate::error::{Result, SimError};
use crate::run::{run_simulation, Summary};

/// Name of the sweep summary inside the sweep directory.
pub const SWEEP_SUMMARY: &str = "summary.csv";

/// Parsed sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Template config text.
    pub template: String,
    /// Directory that relative paths in the template resolve against.
    pub template_dir: PathBuf,
    /// Concurrent runs.
    pub workers: usize,
    /// Root of the per-run directories.
    pub output_dir: PathBuf,
    /// `(section.key, values)` in file order.
    pub ranges: Vec<(String, Vec<String>)>,
}

fn cfg_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

/// Reads a sweep file.
pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let text = std::fs::read_to_string(path).map_err(SimError::io(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_sweep(&text, base)
}

/// Parses sweep text; `base` resolves the template path.
pub fn parse_sweep(text: &str, base: &Path) -> Result<SweepSpec> {
    let opt = ParseOption {
        enabled_quote: false,
        enabled_escape: false,
        ..ParseOption::default()
    };
    let ini = Ini::load_from_str_opt(text, opt).map_err(|e| cfg_err(format!("sweep syntax: {e}")))?;
    let mut template = None;
    let mut workers = 1usize;
    let mut output_dir = PathBuf::from("sweep");
    let mut ranges = Vec::new();
    for (section, props) in ini.iter() {
        match section {
            Some("sweep") => {
                for (k, v) in props.iter() {
                    let v = v.trim();
                    match k {
                        "template" => template = Some(base.join(v)),
                        "workers" => {
                            workers = v
                                .parse()
                                .ok()
                                .filter(|w| *w > 0)
                                .ok_or_else(|| cfg_err(format!("`sweep.workers`: expected a positive count, found `{v}`")))?
                        }
                        "output_dir" => output_dir = PathBuf::from(v),
                        _ => return Err(cfg_err(format!("unknown key `sweep.{k}`"))),
                    }
                }
            }
            Some("ranges") => {
                for (k, v) in props.iter() {
                    let values: Vec<String> = v.split(';').map(|s| s.trim().to_string()).collect();
                    if values.iter().any(String::is_empty) {
                        return Err(cfg_err(format!("`ranges.{k}` has an empty value")));
                    }
                    if ranges.iter().any(|(key, _)| key == k) {
                        return Err(cfg_err(format!("duplicate range `{k}`")));
                    }
                    ranges.push((k.to_string(), values));
                }
            }
            Some(other) => return Err(cfg_err(format!("unknown sweep section [{other}]"))),
            None => {
                if let Some((k, _)) = props.iter().next() {
                    return Err(cfg_err(format!("key `{k}` outside any section")));
                }
            }
        }
    }
    let template = template.ok_or_else(|| cfg_err("missing required key `sweep.template`"))?;
    let text = std::fs::read_to_string(&template).map_err(SimError::io(&template))?;
    Ok(SweepSpec {
        template: text,
        template_dir: template.parent().unwrap_or(Path::new(".")).to_path_buf(),
        workers,
        output_dir,
        ranges,
    })
}

impl SweepSpec {
    /// Every combination of range values, first range varying slowest.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.ranges {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<(String, String)>| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((key.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// One line of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Run index.
    pub index: usize,
    /// Overrides of this run.
    pub overrides: Vec<(String, String)>,
    /// Run directory.
    pub dir: PathBuf,
    /// Outcome.
    pub outcome: std::result::Result<Summary, String>,
}

/// Positivity verdict: smallest concentration above `-1e-13` and the
/// negativity functional zero.
pub fn positivity_holds(s: &Summary) -> bool {
    s.min_c >= -1e-13 && s.max_negativity == 0.0
}

/// Charge-bound verdict: `max(|rho| - sum c_i) <= 1e-13`.
pub fn charge_bound_holds(s: &Summary) -> bool {
    s.max_charge_violation <= 1e-13
}

/// Runs every cell of `spec` under `root`, writing `run_NNNN` directories
/// and the summary CSV.
pub fn sweep(spec: &SweepSpec, root: &Path) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(root).map_err(SimError::io(root))?;
    let cells = spec.cells();
    info!("sweep of {} runs on {} workers", cells.len(), spec.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| cfg_err(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .into_par_iter()
            .enumerate()
            .map(|(index, overrides)| {
                let dir = root.join(format!("run_{index:04}"));
                let outcome = run_cell(spec, &overrides, &dir).map_err(|e| {
                    warn!("run {index} failed: {e}");
                    e.to_string()
                });
                SweepRow {
                    index,
                    overrides,
                    dir,
                    outcome,
                }
            })
            .collect()
    });
    write_summary(&root.join(SWEEP_SUMMARY), spec, &rows)?;
    Ok(rows)
}

fn run_cell(spec: &SweepSpec, overrides: &[(String, String)], dir: &Path) -> Result<Summary> {
    let mut all = overrides.to_vec();
    all.push(("run.output_dir".into(), dir.display().to_string()));
    let run = parse_config_with(&spec.template, &spec.template_dir, &all)?;
    Ok(run_simulation(&run, Some(dir))?.summary)
}

const SUMMARY_FIELDS: [&str; 15] = [
    "steps",
    "t",
    "stop",
    "min_c",
    "max_negativity",
    "max_charge_violation",
    "max_div_u",
    "b",
    "r",
    "u",
    "dissipation",
    "min_m1",
    "min_m2",
    "positivity",
    "charge_bound",
];

fn write_summary(path: &Path, spec: &SweepSpec, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run".to_string()];
    header.extend(spec.ranges.iter().map(|(k, _)| k.clone()));
    header.push("status".into());
    header.extend(SUMMARY_FIELDS.iter().map(|s| s.to_string()));
    header.push("error".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![format!("run_{:04}", r.index)];
        rec.extend(r.overrides.iter().map(|(_, v)| v.clone()));
        match &r.outcome {
            Ok(s) => {
                rec.push("ok".into());
                let f = |v: f64| format!("{v:.16e}");
                rec.extend([
                    s.steps.to_string(),
                    f(s.t),
                    s.stop.as_str().to_string(),
                    f(s.min_c),
                    f(s.max_negativity),
                    f(s.max_charge_violation),
                    f(s.max_div_u),
                    f(s.monitors[0]),
                    f(s.monitors[1]),
                    f(s.monitors[2]),
                    f(s.monitors[3]),
                    f(s.min_m1),
                    f(s.min_m2),
                    verdict(positivity_holds(s)),
                    verdict(charge_bound_holds(s)),
                ]);
                rec.push(String::new());
            }
            Err(e) => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat(String::new()).take(SUMMARY_FIELDS.len()));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(SimError::io(path))?;
    Ok(())
}

fn verdict(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}
