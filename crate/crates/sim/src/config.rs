//! Run configuration.
//!
//! Plain INI. Every key below is recognized; anything else is rejected
//! before a single field is allocated.
//!
//! ```ini
//! [grid]
//! dim = 2                    # 2 or 3
//! extents = 1, 1             # box side lengths
//! cells = 64, 64             # cells per axis
//!
//! [physics]
//! epsilon = 0.1              # required
//! nu = 1                     # required
//! coupling_k = 1             # required
//! flow_mode = stokes         # stokes | navier_stokes | frozen_zero_velocity
//! equal_diffusivity_mode = false
//!
//! [species1]                 # species2, species3, ... numbered from 1
//! valence = 1                # required
//! diffusivity = 1            # required
//! gamma = 2                  # required boundary trace
//! initial = extension        # initial concentration
//!
//! [potential]
//! w = linear(0, 5, 0)        # boundary potential, default 0
//!
//! [run]
//! t_final = 0.5              # required
//! dt = auto                  # auto or a fixed step
//! dt_max = 1e-3
//! max_steps =                # unlimited when empty
//! output_every = 1
//! checkpoint_every = 0       # 0 disables checkpoints
//! delta = 1
//! negativity_exponent = 2
//! seed = 0
//! perturbation = 0           # multiplicative noise amplitude on initial data
//! poisson_tol = 1e-10
//! projection_tol = 1e-10
//! boundary_tol = 1e-12
//! steady_tol = 0             # stop once max |dc/dt| falls below; 0 disables
//! output_dir = results
//! input_dir =                # base of relative file paths, default config dir
//!
//! [oracle]
//! resolution = 2000          # nodes of the 1D steady solver
//! ```
//!
//! Expressions follow the grammar in [`crate::expr`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption};
use npns_core::{FlowMode, SimParams, Species, Tolerances};

use crate::error::{Result, SimError};
use crate::expr::Expr;

/// Shape of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Spatial dimension.
    pub dim: usize,
    /// Side lengths.
    pub extents: Vec<f64>,
    /// Cells per axis.
    pub cells: Vec<usize>,
}

/// Boundary and initial data of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesData {
    /// Boundary trace.
    pub gamma: Expr,
    /// Initial concentration.
    pub initial: Expr,
}

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtChoice {
    /// Largest step admitted by the stability bounds.
    Auto,
    /// Fixed step.
    Fixed(f64),
}

/// Fully validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// Box shape.
    pub grid: GridSpec,
    /// Physical parameters.
    pub params: SimParams,
    /// Per-species data, in species order.
    pub species: Vec<SpeciesData>,
    /// Boundary potential.
    pub w: Expr,
    /// Final time.
    pub t_final: f64,
    /// Step policy.
    pub dt: DtChoice,
    /// Upper bound of automatic steps.
    pub dt_max: f64,
    /// Hard step limit.
    pub max_steps: Option<u64>,
    /// Steps between time-series rows.
    pub output_every: u64,
    /// Steps between checkpoints, 0 for none.
    pub checkpoint_every: u64,
    /// Lyapunov weight.
    pub delta: f64,
    /// Exponent of the negativity functional.
    pub negativity_exponent: u32,
    /// Seed of the initial perturbation.
    pub seed: u64,
    /// Amplitude of the multiplicative initial perturbation.
    pub perturbation: f64,
    /// Solver tolerances.
    pub tolerances: Tolerances,
    /// Tolerance of the boundary extensions.
    pub boundary_tol: f64,
    /// Steady-state stopping threshold, 0 when off.
    pub steady_tol: f64,
    /// Results directory.
    pub output_dir: PathBuf,
    /// Base of relative file paths.
    pub input_dir: PathBuf,
    /// Nodes of the 1D oracle.
    pub oracle_resolution: usize,
}

const GRID_KEYS: &[&str] = &["dim", "extents", "cells"];
const PHYSICS_KEYS: &[&str] = &["epsilon", "nu", "coupling_k", "flow_mode", "equal_diffusivity_mode"];
const SPECIES_KEYS: &[&str] = &["valence", "diffusivity", "gamma", "initial"];
const POTENTIAL_KEYS: &[&str] = &["w"];
const RUN_KEYS: &[&str] = &[
    "t_final",
    "dt",
    "dt_max",
    "max_steps",
    "output_every",
    "checkpoint_every",
    "delta",
    "negativity_exponent",
    "seed",
    "perturbation",
    "poisson_tol",
    "projection_tol",
    "boundary_tol",
    "steady_tol",
    "output_dir",
    "input_dir",
];
const ORACLE_KEYS: &[&str] = &["resolution"];

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "grid" => Some(GRID_KEYS),
        "physics" => Some(PHYSICS_KEYS),
        "potential" => Some(POTENTIAL_KEYS),
        "run" => Some(RUN_KEYS),
        "oracle" => Some(ORACLE_KEYS),
        s if species_number(s).is_some() => Some(SPECIES_KEYS),
        _ => None,
    }
}

fn species_number(section: &str) -> Option<usize> {
    let n = section.strip_prefix("species")?;
    if n.starts_with('0') {
        return None;
    }
    n.parse().ok().filter(|v| *v >= 1)
}

fn cfg_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

/// Flat `section.key -> value` table parsed from INI text.
#[derive(Debug, Clone, Default)]
pub struct Table {
    entries: BTreeMap<(String, String), String>,
}

impl Table {
    /// Parses INI text and rejects unknown sections, unknown keys and
    /// duplicates.
    pub fn parse(text: &str) -> Result<Self> {
        let opt = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| cfg_err(format!("syntax: {e}")))?;
        let mut t = Table::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(cfg_err(format!("key `{k}` outside any section")));
                }
                continue;
            };
            for (k, v) in props.iter() {
                t.insert(section, k, v)?;
            }
        }
        Ok(t)
    }

    fn insert(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let allowed = allowed_keys(section).ok_or_else(|| cfg_err(format!("unknown section [{section}]")))?;
        if !allowed.contains(&key) {
            return Err(cfg_err(format!("unknown key `{section}.{key}`")));
        }
        let slot = (section.to_string(), key.to_string());
        if self.entries.contains_key(&slot) {
            return Err(cfg_err(format!("duplicate key `{section}.{key}`")));
        }
        self.entries.insert(slot, value.trim().to_string());
        Ok(())
    }

    /// Replaces or adds `section.key`, with the same validation as parsing.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (section, key) = dotted
            .split_once('.')
            .ok_or_else(|| cfg_err(format!("override `{dotted}` is not of the form section.key")))?;
        self.entries.remove(&(section.to_string(), key.to_string()));
        self.insert(section, key, value)
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    fn required(&self, section: &str, key: &str) -> Result<&str> {
        self.raw(section, key)
            .ok_or_else(|| cfg_err(format!("missing required key `{section}.{key}`")))
    }

    fn sections(&self) -> impl Iterator<Item = &str> {
        let mut seen: Vec<&str> = self.entries.keys().map(|(s, _)| s.as_str()).collect();
        seen.dedup();
        seen.into_iter()
    }
}

fn parse_as<T: std::str::FromStr>(section: &str, key: &str, v: &str, what: &str) -> Result<T> {
    v.parse()
        .map_err(|_| cfg_err(format!("`{section}.{key}`: expected {what}, found `{v}`")))
}

fn finite(section: &str, key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_as(section, key, v, "a number")?;
    if !x.is_finite() {
        return Err(cfg_err(format!("`{section}.{key}`: expected a finite number, found `{v}`")));
    }
    Ok(x)
}

fn positive(section: &str, key: &str, v: &str) -> Result<f64> {
    let x = finite(section, key, v)?;
    if !(x > 0.0) {
        return Err(cfg_err(format!("`{section}.{key}` must be positive, found `{v}`")));
    }
    Ok(x)
}

fn list<T: std::str::FromStr>(section: &str, key: &str, v: &str, what: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_as(section, key, s.trim(), what)).collect()
}

fn boolean(section: &str, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(format!("`{section}.{key}`: expected true or false, found `{v}`"))),
    }
}

fn flow_mode(v: &str) -> Result<FlowMode> {
    match v {
        "stokes" => Ok(FlowMode::Stokes),
        "navier_stokes" => Ok(FlowMode::NavierStokes),
        "frozen_zero_velocity" => Ok(FlowMode::FrozenZeroVelocity),
        _ => Err(cfg_err(format!(
            "`physics.flow_mode`: expected stokes, navier_stokes or frozen_zero_velocity, found `{v}`"
        ))),
    }
}

fn expr(section: &str, key: &str, v: &str, base: &Path) -> Result<Expr> {
    Expr::parse(v, base).map_err(|e| cfg_err(format!("`{section}.{key}`: {e}")))
}

/// Reads and validates a configuration file. Relative file paths inside
/// expressions resolve against the file's directory.
pub fn load_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(SimError::io(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_with(&text, base, &[])
}

/// Parses configuration text with `section.key = value` overrides applied on
/// top.
pub fn parse_config_with(text: &str, base_dir: &Path, overrides: &[(String, String)]) -> Result<RunSpec> {
    let mut t = Table::parse(text)?;
    for (k, v) in overrides {
        t.set(k, v)?;
    }
    from_table(&t, base_dir)
}

fn from_table(t: &Table, base_dir: &Path) -> Result<RunSpec> {
    let dim: usize = parse_as("grid", "dim", t.required("grid", "dim")?, "2 or 3")?;
    if !(2..=3).contains(&dim) {
        return Err(cfg_err(format!("`grid.dim` must be 2 or 3, found {dim}")));
    }
    let extents: Vec<f64> = list("grid", "extents", t.required("grid", "extents")?, "numbers")?;
    let cells: Vec<usize> = list("grid", "cells", t.required("grid", "cells")?, "cell counts")?;
    if extents.len() != dim || cells.len() != dim {
        return Err(cfg_err(format!("`grid.extents` and `grid.cells` need {dim} entries")));
    }
    if extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(cfg_err("`grid.extents` must be positive"));
    }
    if cells.iter().any(|c| *c < 2) {
        return Err(cfg_err("`grid.cells` must be at least 2 per axis"));
    }

    let input_dir = match t.raw("run", "input_dir") {
        Some(d) => {
            let d = PathBuf::from(d);
            if d.is_absolute() {
                d
            } else {
                base_dir.join(d)
            }
        }
        None => base_dir.to_path_buf(),
    };
    let base = input_dir.as_path();

    let mut numbers: Vec<usize> = t.sections().filter_map(species_number).collect();
    numbers.sort_unstable();
    if numbers.is_empty() {
        return Err(cfg_err("at least one [species1] section is required"));
    }
    if numbers.iter().enumerate().any(|(i, n)| *n != i + 1) {
        return Err(cfg_err("species sections must be numbered 1, 2, ... without gaps"));
    }
    let mut species = Vec::new();
    let mut data = Vec::new();
    for n in numbers {
        let s = format!("species{n}");
        let valence: i32 = parse_as(&s, "valence", t.required(&s, "valence")?, "an integer")?;
        let diffusivity = finite(&s, "diffusivity", t.required(&s, "diffusivity")?)?;
        let gamma = expr(&s, "gamma", t.required(&s, "gamma")?, base)?;
        if gamma.is_cellwise() {
            return Err(cfg_err(format!("`{s}.gamma` must be a pointwise expression")));
        }
        let initial = expr(&s, "initial", t.raw(&s, "initial").unwrap_or("extension"), base)?;
        species.push(Species { valence, diffusivity });
        data.push(SpeciesData { gamma, initial });
    }

    let params = SimParams {
        epsilon: finite("physics", "epsilon", t.required("physics", "epsilon")?)?,
        nu: finite("physics", "nu", t.required("physics", "nu")?)?,
        coupling_k: finite("physics", "coupling_k", t.required("physics", "coupling_k")?)?,
        species,
        flow_mode: flow_mode(t.raw("physics", "flow_mode").unwrap_or("stokes"))?,
        equal_diffusivity_mode: match t.raw("physics", "equal_diffusivity_mode") {
            Some(v) => boolean("physics", "equal_diffusivity_mode", v)?,
            None => false,
        },
    };
    if let Err(violations) = npns_core::validate_params(&params) {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(cfg_err(msgs.join("; ")));
    }

    let w = expr("potential", "w", t.raw("potential", "w").unwrap_or("0"), base)?;
    if w.is_cellwise() {
        return Err(cfg_err("`potential.w` must be a pointwise expression"));
    }

    let get = |key: &str, default: &'static str| t.raw("run", key).unwrap_or(default);
    let t_final = positive("run", "t_final", t.required("run", "t_final")?)?;
    let dt = match get("dt", "auto") {
        "auto" => DtChoice::Auto,
        v => DtChoice::Fixed(positive("run", "dt", v)?),
    };
    let max_steps = t
        .raw("run", "max_steps")
        .map(|v| parse_as("run", "max_steps", v, "a step count"))
        .transpose()?;
    let output_every: u64 = parse_as("run", "output_every", get("output_every", "1"), "a step count")?;
    if output_every == 0 {
        return Err(cfg_err("`run.output_every` must be at least 1"));
    }
    let negativity_exponent: u32 = parse_as(
        "run",
        "negativity_exponent",
        get("negativity_exponent", "2"),
        "a positive integer",
    )?;
    if negativity_exponent == 0 {
        return Err(cfg_err("`run.negativity_exponent` must be at least 1"));
    }
    let perturbation = finite("run", "perturbation", get("perturbation", "0"))?;
    if !(0.0..1.0).contains(&perturbation) {
        return Err(cfg_err("`run.perturbation` must lie in [0, 1)"));
    }
    let steady_tol = finite("run", "steady_tol", get("steady_tol", "0"))?;
    if steady_tol < 0.0 {
        return Err(cfg_err("`run.steady_tol` must be nonnegative"));
    }
    let oracle_resolution: usize = parse_as(
        "oracle",
        "resolution",
        t.raw("oracle", "resolution").unwrap_or("2000"),
        "a node count",
    )?;
    if oracle_resolution < 3 {
        return Err(cfg_err("`oracle.resolution` must be at least 3"));
    }

    Ok(RunSpec {
        grid: GridSpec { dim, extents, cells },
        params,
        species: data,
        w,
        t_final,
        dt,
        dt_max: positive("run", "dt_max", get("dt_max", "1e-3"))?,
        max_steps,
        output_every,
        checkpoint_every: parse_as("run", "checkpoint_every", get("checkpoint_every", "0"), "a step count")?,
        delta: positive("run", "delta", get("delta", "1"))?,
        negativity_exponent,
        seed: parse_as("run", "seed", get("seed", "0"), "an unsigned integer")?,
        perturbation,
        tolerances: Tolerances {
            poisson: positive("run", "poisson_tol", get("poisson_tol", "1e-10"))?,
            projection: positive("run", "projection_tol", get("projection_tol", "1e-10"))?,
        },
        boundary_tol: positive("run", "boundary_tol", get("boundary_tol", "1e-12"))?,
        steady_tol,
        output_dir: PathBuf::from(get("output_dir", "results")),
        input_dir,
        oracle_resolution,
    })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl RunSpec {
    /// Effective configuration with every default spelled out and `input_dir`
    /// made absolute, so it parses to the same spec from any directory.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let p = &self.params;
        let _ = writeln!(s, "[grid]\ndim = {}\nextents = {}\ncells = {}\n", g.dim, join(&g.extents), join(&g.cells));
        let _ = writeln!(
            s,
            "[physics]\nepsilon = {:?}\nnu = {:?}\ncoupling_k = {:?}\nflow_mode = {}\nequal_diffusivity_mode = {}\n",
            p.epsilon,
            p.nu,
            p.coupling_k,
            p.flow_mode.as_str(),
            p.equal_diffusivity_mode
        );
        for (i, (sp, d)) in p.species.iter().zip(&self.species).enumerate() {
            let _ = writeln!(
                s,
                "[species{}]\nvalence = {}\ndiffusivity = {:?}\ngamma = {}\ninitial = {}\n",
                i + 1,
                sp.valence,
                sp.diffusivity,
                d.gamma,
                d.initial
            );
        }
        let _ = writeln!(s, "[potential]\nw = {}\n", self.w);
        let dt = match self.dt {
            DtChoice::Auto => "auto".to_string(),
            DtChoice::Fixed(v) => format!("{v:?}"),
        };
        let _ = writeln!(s, "[run]\nt_final = {:?}\ndt = {dt}\ndt_max = {:?}", self.t_final, self.dt_max);
        if let Some(m) = self.max_steps {
            let _ = writeln!(s, "max_steps = {m}");
        }
        let _ = writeln!(
            s,
            "output_every = {}\ncheckpoint_every = {}\ndelta = {:?}\nnegativity_exponent = {}\nseed = {}\nperturbation = {:?}",
            self.output_every, self.checkpoint_every, self.delta, self.negativity_exponent, self.seed, self.perturbation
        );
        let _ = writeln!(
            s,
            "poisson_tol = {:?}\nprojection_tol = {:?}\nboundary_tol = {:?}\nsteady_tol = {:?}\noutput_dir = {}\ninput_dir = {}\n",
            self.tolerances.poisson,
            self.tolerances.projection,
            self.boundary_tol,
            self.steady_tol,
            self.output_dir.display(),
            std::path::absolute(&self.input_dir).unwrap_or_else(|_| self.input_dir.clone()).display()
        );
        let _ = writeln!(s, "[oracle]\nresolution = {}", self.oracle_resolution);
        s
    }

    /// Characteristic mesh width: the largest cell side.
    pub fn mesh_width(&self) -> f64 {
        self.grid
            .extents
            .iter()
            .zip(&self.grid.cells)
            .map(|(e, n)| e / *n as f64)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = "\
[grid]
dim = 2
extents = 1, 1
cells = 8, 8

[physics]
epsilon = 0.1
nu = 1
coupling_k = 1

[species1]
valence = 1
diffusivity = 1
gamma = 2

[species2]
valence = -1
diffusivity = 0.5
gamma = 1

[potential]
w = linear(0, 5, 0)

[run]
t_final = 0.5
";

    fn parse(text: &str) -> Result<RunSpec> {
        parse_config_with(text, Path::new("."), &[])
    }

    fn message(text: &str) -> String {
        parse(text).unwrap_err().to_string()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.grid.cells, vec![8, 8]);
        assert_eq!(s.params.species.len(), 2);
        assert_eq!(s.params.flow_mode, FlowMode::Stokes);
        assert!(!s.params.equal_diffusivity_mode);
        assert_eq!(s.dt, DtChoice::Auto);
        assert_eq!(s.dt_max, 1e-3);
        assert_eq!(s.output_every, 1);
        assert_eq!(s.checkpoint_every, 0);
        assert_eq!(s.delta, 1.0);
        assert_eq!(s.negativity_exponent, 2);
        assert_eq!(s.tolerances, Tolerances::default());
        assert_eq!(s.output_dir, PathBuf::from("results"));
        assert!(s.species[0].initial.uses_extension());
        assert_eq!(s.max_steps, None);
    }

    #[test]
    fn missing_epsilon_is_named() {
        let m = message(&MINIMAL.replace("epsilon = 0.1\n", ""));
        assert!(m.contains("physics.epsilon"), "{m}");
    }

    #[test]
    fn misspelled_key_is_rejected() {
        let m = message(&MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\nepsilonn = 0.1"));
        assert!(m.contains("unknown key") && m.contains("physics.epsilonn"), "{m}");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let cases = [
            MINIMAL.replace("[potential]", "[potentials]"),
            MINIMAL.replace("epsilon = 0.1", "epsilon = abc"),
            MINIMAL.replace("epsilon = 0.1", "epsilon = -1"),
            MINIMAL.replace("cells = 8, 8", "cells = 8"),
            MINIMAL.replace("[species2]", "[species3]"),
            MINIMAL.replace("gamma = 1", "gamma = extension"),
            MINIMAL.replace("diffusivity = 0.5", "diffusivity = 0"),
            MINIMAL.replace("t_final = 0.5", "t_final = 0.5\nt_final = 1"),
            format!("stray = 1\n{MINIMAL}"),
            format!("{MINIMAL}flow_mode = stokes\n"),
        ];
        for c in &cases {
            assert!(parse(c).is_err(), "{c}");
        }
    }

    #[test]
    fn overrides_apply_and_validate() {
        let o = vec![("run.output_dir".to_string(), "/tmp/x".to_string())];
        let s = parse_config_with(MINIMAL, Path::new("."), &o).unwrap();
        assert_eq!(s.output_dir, PathBuf::from("/tmp/x"));
        let bad = vec![("run.nonsense".to_string(), "1".to_string())];
        assert!(parse_config_with(MINIMAL, Path::new("."), &bad).is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let text = format!("{MINIMAL}dt = 1e-4\nmax_steps = 7\nseed = 3\n");
        let s = parse(&text).unwrap();
        let again = parse(&s.to_ini()).unwrap();
        assert_eq!(again.input_dir, std::path::absolute(&s.input_dir).unwrap());
        assert_eq!(s.to_ini(), again.to_ini());
        let mut s = s;
        s.input_dir = again.input_dir.clone();
        assert_eq!(s, again);
    }
}
