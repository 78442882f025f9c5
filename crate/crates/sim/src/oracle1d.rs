//! Steady two-species profiles on an interval, by Newton's method.
//!
//! Nodes `x_j = j h`, `j = 0..=N`, carry `(c_1, c_2, Phi)`; the end values
//! are the Dirichlet data. At interior nodes the residuals are the
//! flux-form central differences
//!
//! ```text
//! G_i = c_{j+1} - 2 c_j + c_{j-1}
//!     + z_i/2 [ (c_{j+1} + c_j)(Phi_{j+1} - Phi_j) - (c_j + c_{j-1})(Phi_j - Phi_{j-1}) ]
//! G_3 = eps (Phi_{j+1} - 2 Phi_j + Phi_{j-1}) + h^2 (z_1 c_1 + z_2 c_2)
//! ```
//!
//! The Jacobian is block tridiagonal with 3x3 blocks and is factored by
//! the block Thomas algorithm. Steps are damped until the residual drops
//! and concentrations stay positive. When the undamped iteration stalls,
//! the boundary data are approached by continuation from their means.

use nalgebra::{Matrix3, Vector3};

use npns_core::FlowMode;

use crate::config::{DtChoice, RunSpec};
use crate::error::{Result, SimError};
use crate::expr::{Expr, Table, Term};
use crate::run::{spec_grid, Simulation};

/// Boundary-value problem for the steady profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleInput {
    /// Permittivity.
    pub epsilon: f64,
    /// Valences of the two species.
    pub valences: [i32; 2],
    /// Interval length.
    pub length: f64,
    /// Concentrations at `x = 0`.
    pub gamma_left: [f64; 2],
    /// Concentrations at `x = length`.
    pub gamma_right: [f64; 2],
    /// Potential at `x = 0`.
    pub phi_left: f64,
    /// Potential at `x = length`.
    pub phi_right: f64,
    /// Number of nodes including both ends.
    pub nodes: usize,
}

/// Steady profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Node positions.
    pub x: Vec<f64>,
    /// Concentrations per species.
    pub c: [Vec<f64>; 2],
    /// Potential.
    pub phi: Vec<f64>,
    /// Final residual max-norm.
    pub residual: f64,
    /// Residual max-norm before each Newton update, over all stages.
    pub trace: Vec<f64>,
}

impl OracleSolution {
    /// Linear interpolation `(c_1, c_2, Phi)` at `x`, clamped to the interval.
    pub fn sample(&self, x: f64) -> [f64; 3] {
        let n = self.x.len();
        let h = self.x[n - 1] / (n - 1) as f64;
        let s = (x / h).clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        let w = s - k as f64;
        let lerp = |v: &[f64]| v[k] * (1.0 - w) + v[k + 1] * w;
        [lerp(&self.c[0]), lerp(&self.c[1]), lerp(&self.phi)]
    }
}

const MAX_ITER: usize = 60;
const TOL: f64 = 1e-13;

fn oracle_err(message: impl Into<String>, trace: &[f64]) -> SimError {
    SimError::Oracle {
        message: message.into(),
        trace: trace.to_vec(),
    }
}

/// Node values as `[c_1, c_2, Phi]` triples.
type Nodes = Vec<Vector3<f64>>;

struct Problem {
    eps: f64,
    z: [f64; 2],
    h2: f64,
}

impl Problem {
    fn residual(&self, u: &Nodes) -> Nodes {
        let n = u.len();
        let mut g = vec![Vector3::zeros(); n];
        for j in 1..n - 1 {
            let (a, b, c) = (u[j - 1], u[j], u[j + 1]);
            for i in 0..2 {
                let drift = (c[i] + b[i]) * (c[2] - b[2]) - (b[i] + a[i]) * (b[2] - a[2]);
                g[j][i] = c[i] - 2.0 * b[i] + a[i] + 0.5 * self.z[i] * drift;
            }
            g[j][2] = self.eps * (c[2] - 2.0 * b[2] + a[2]) + self.h2 * (self.z[0] * b[0] + self.z[1] * b[1]);
        }
        g
    }

    /// Solves `J du = -g` for interior nodes.
    fn newton_step(&self, u: &Nodes, g: &Nodes) -> Option<Nodes> {
        let n = u.len();
        let m = n - 2;
        let mut cp: Vec<Matrix3<f64>> = Vec::with_capacity(m);
        let mut dp: Vec<Vector3<f64>> = Vec::with_capacity(m);
        for j in 1..n - 1 {
            let (a, b, c) = (u[j - 1], u[j], u[j + 1]);
            let mut lo = Matrix3::zeros();
            let mut di = Matrix3::zeros();
            let mut up = Matrix3::zeros();
            for i in 0..2 {
                let hz = 0.5 * self.z[i];
                lo[(i, i)] = 1.0 - hz * (b[2] - a[2]);
                lo[(i, 2)] = hz * (b[i] + a[i]);
                di[(i, i)] = -2.0 + hz * ((c[2] - b[2]) - (b[2] - a[2]));
                di[(i, 2)] = -hz * ((c[i] + b[i]) + (b[i] + a[i]));
                up[(i, i)] = 1.0 + hz * (c[2] - b[2]);
                up[(i, 2)] = hz * (c[i] + b[i]);
            }
            lo[(2, 2)] = self.eps;
            up[(2, 2)] = self.eps;
            di[(2, 2)] = -2.0 * self.eps;
            di[(2, 0)] = self.h2 * self.z[0];
            di[(2, 1)] = self.h2 * self.z[1];
            let rhs = -g[j];
            let k = j - 1;
            let (mat, r) = if k == 0 {
                (di, rhs)
            } else {
                (di - lo * cp[k - 1], rhs - lo * dp[k - 1])
            };
            let inv = mat.try_inverse()?;
            cp.push(inv * up);
            dp.push(inv * r);
        }
        let mut du = vec![Vector3::zeros(); n];
        for k in (0..m).rev() {
            du[k + 1] = if k + 1 == m { dp[k] } else { dp[k] - cp[k] * du[k + 2] };
        }
        Some(du)
    }
}

fn max_norm(g: &Nodes) -> f64 {
    g.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

fn newton(p: &Problem, u: &mut Nodes, trace: &mut Vec<f64>) -> Result<f64> {
    let mut g = p.residual(u);
    let mut r = max_norm(&g);
    for _ in 0..MAX_ITER {
        trace.push(r);
        if r <= TOL {
            return Ok(r);
        }
        let du = p
            .newton_step(u, &g)
            .ok_or_else(|| oracle_err("singular Jacobian block", trace))?;
        let mut lambda = 1.0;
        loop {
            let trial: Nodes = u.iter().zip(&du).map(|(a, d)| a + lambda * d).collect();
            let positive = trial.iter().all(|v| v[0] > 0.0 && v[1] > 0.0);
            if positive {
                let gt = p.residual(&trial);
                let rt = max_norm(&gt);
                if rt < (1.0 - 1e-4 * lambda) * r || rt <= TOL {
                    *u = trial;
                    g = gt;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1.0 / 1024.0 {
                if r < 1e3 * TOL {
                    return Ok(r);
                }
                return Err(oracle_err("line search failed", trace));
            }
        }
    }
    trace.push(r);
    if r <= 1e3 * TOL {
        Ok(r)
    } else {
        Err(oracle_err("Newton iteration did not converge", trace))
    }
}

fn set_ends(u: &mut Nodes, input: &OracleInput, theta: f64) {
    let n = u.len();
    let mix = |l: f64, r: f64, v: f64| {
        let mean = 0.5 * (l + r);
        mean + theta * (v - mean)
    };
    let (gl, gr) = (input.gamma_left, input.gamma_right);
    u[0] = Vector3::new(
        mix(gl[0], gr[0], gl[0]),
        mix(gl[1], gr[1], gl[1]),
        mix(input.phi_left, input.phi_right, input.phi_left),
    );
    u[n - 1] = Vector3::new(
        mix(gl[0], gr[0], gr[0]),
        mix(gl[1], gr[1], gr[1]),
        mix(input.phi_left, input.phi_right, input.phi_right),
    );
}

fn linear_guess(u: &mut Nodes) {
    let n = u.len();
    let (a, b) = (u[0], u[n - 1]);
    for (j, v) in u.iter_mut().enumerate().take(n - 1).skip(1) {
        let w = j as f64 / (n - 1) as f64;
        *v = a * (1.0 - w) + b * w;
    }
}

/// Steady profiles of the two-species problem with zero velocity.
pub fn steady_oracle_1d(input: &OracleInput) -> Result<OracleSolution> {
    let n = input.nodes;
    if n < 3 {
        return Err(oracle_err("at least 3 nodes are required", &[]));
    }
    if !(input.epsilon > 0.0 && input.length > 0.0) {
        return Err(oracle_err("epsilon and length must be positive", &[]));
    }
    if input.valences.contains(&0) {
        return Err(oracle_err("valences must be nonzero", &[]));
    }
    if input.gamma_left.iter().chain(&input.gamma_right).any(|g| !(*g > 0.0)) {
        return Err(oracle_err("boundary concentrations must be positive", &[]));
    }
    let h = input.length / (n - 1) as f64;
    let p = Problem {
        eps: input.epsilon,
        z: [input.valences[0] as f64, input.valences[1] as f64],
        h2: h * h,
    };
    let mut trace = Vec::new();
    let mut u: Nodes = vec![Vector3::zeros(); n];
    set_ends(&mut u, input, 1.0);
    linear_guess(&mut u);
    let residual = match newton(&p, &mut u, &mut trace) {
        Ok(r) => r,
        Err(_) => {
            let stages = 16;
            let mut r = f64::NAN;
            set_ends(&mut u, input, 0.0);
            linear_guess(&mut u);
            for k in 0..=stages {
                set_ends(&mut u, input, k as f64 / stages as f64);
                r = newton(&p, &mut u, &mut trace)?;
            }
            r
        }
    };
    Ok(OracleSolution {
        x: (0..n).map(|j| j as f64 * h).collect(),
        c: [u.iter().map(|v| v[0]).collect(), u.iter().map(|v| v[1]).collect()],
        phi: u.iter().map(|v| v[2]).collect(),
        residual,
        trace,
    })
}

/// Oracle problem along the first axis of a two-species spec, with the
/// boundary data read at the midpoints of the `x = 0` and `x = L` walls.
pub fn oracle_input(spec: &RunSpec) -> Result<OracleInput> {
    if spec.params.species.len() != 2 {
        return Err(SimError::Config("the 1D oracle needs exactly two species".into()));
    }
    let l = spec.grid.extents[0];
    let mut mid = [0.0; 3];
    for a in 1..spec.grid.dim {
        mid[a] = 0.5 * spec.grid.extents[a];
    }
    let left = mid;
    let mut right = mid;
    right[0] = l;
    let g = |k: usize, x: [f64; 3]| spec.species[k].gamma.eval(x);
    Ok(OracleInput {
        epsilon: spec.params.epsilon,
        valences: [spec.params.species[0].valence, spec.params.species[1].valence],
        length: l,
        gamma_left: [g(0, left)?, g(1, left)?],
        gamma_right: [g(0, right)?, g(1, right)?],
        phi_left: spec.w.eval(left)?,
        phi_right: spec.w.eval(right)?,
        nodes: spec.oracle_resolution,
    })
}

/// Largest deviation of a y-independent 2D steady run from the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `L^inf` differences of `c_1`, `c_2` and `Phi` at cell centers.
    pub linf: [f64; 3],
    /// Steps to reach the steady state.
    pub steps: u64,
    /// Final `max |dc/dt|`.
    pub rate: f64,
}

fn table_expr(x: &[f64], v: &[f64], name: &str) -> Result<Expr> {
    let t = Table::new(0, x.to_vec(), v.to_vec())?;
    Ok(Expr::from_term(Term::Table(t), format!("table(0, <{name}>)")))
}

/// Runs the 2D code on a strip of `cells_y` rows with the oracle profiles
/// imposed on every wall and as initial data, in frozen-flow mode, until
/// `max |dc/dt| < steady_tol`, then compares at cell centers.
pub fn compare_steady_2d(spec: &RunSpec, oracle: &OracleSolution, cells_y: usize, steady_tol: f64) -> Result<Comparison> {
    let nx = spec.grid.cells[0];
    let l = spec.grid.extents[0];
    let h = l / nx as f64;
    let mut s = spec.clone();
    s.grid = crate::config::GridSpec {
        dim: 2,
        extents: vec![l, h * cells_y as f64],
        cells: vec![nx, cells_y],
    };
    s.params.flow_mode = FlowMode::FrozenZeroVelocity;
    for (i, sp) in s.species.iter_mut().enumerate() {
        sp.gamma = table_expr(&oracle.x, &oracle.c[i], "oracle")?;
        sp.initial = sp.gamma.clone();
    }
    s.w = table_expr(&oracle.x, &oracle.phi, "oracle")?;
    s.dt = DtChoice::Auto;
    s.dt_max = f64::INFINITY;
    s.perturbation = 0.0;
    s.tolerances.poisson = s.tolerances.poisson.min(1e-13);
    let mut sim = Simulation::new(&s)?;
    let max_steps = s.max_steps.unwrap_or(5_000_000);
    while !(sim.last_rate() < steady_tol) {
        if sim.state().step >= max_steps {
            return Err(oracle_err(
                format!("2D run not steady after {max_steps} steps (rate {:e})", sim.last_rate()),
                &[],
            ));
        }
        let dt = sim.suggested_dt(f64::INFINITY);
        sim.advance(dt)?;
    }
    let grid = spec_grid(&s)?;
    let st = sim.state();
    let mut linf = [0.0f64; 3];
    for (k, x) in grid.cell_centers().iter().enumerate() {
        let o = oracle.sample(x[0]);
        linf[0] = linf[0].max((st.c[0][k] - o[0]).abs());
        linf[1] = linf[1].max((st.c[1][k] - o[1]).abs());
        linf[2] = linf[2].max((st.phi[k] - o[2]).abs());
    }
    Ok(Comparison {
        linf,
        steps: st.step,
        rate: sim.last_rate(),
    })
}
