//! Preset expressions for boundary traces and initial data.
//!
//! An expression is a signed sum of terms. Each term is a number, optionally
//! followed by `*` and a preset, or a preset alone:
//!
//! ```text
//! const(a)                      a
//! linear(a, bx, by[, bz])       a + bx x + by y + bz z
//! sin(a, kx, ky[, kz])          a * prod sin(k pi x) over axes with k != 0
//! cos(a, kx, ky[, kz])          a * prod cos(k pi x)
//! gauss(a, x0, y0[, z0], s)     a * exp(-|x - x0|^2 / (2 s^2))
//! table(axis, path)             piecewise-linear in one coordinate, clamped
//! extension                     harmonic extension of the boundary trace
//! file(path)                    one value per cell, cell-index order
//! ```
//!
//! `extension` and `file` are only meaningful for initial concentrations.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Expression parse or load failure.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ExprError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError(msg.into()))
}

/// Samples `(x, value)` along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Coordinate axis.
    pub axis: usize,
    /// Increasing abscissae.
    pub xs: Vec<f64>,
    /// Values.
    pub ys: Vec<f64>,
}

impl Table {
    /// Validates that abscissae increase strictly.
    pub fn new(axis: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, ExprError> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return err("table needs at least two (x, value) samples");
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return err("table abscissae must increase");
        }
        if axis > 2 {
            return err("table axis must be 0, 1 or 2");
        }
        Ok(Table { axis, xs, ys })
    }

    /// Linear interpolation, clamped outside the samples.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|v| *v <= x).min(n - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let w = (x - x0) / (x1 - x0);
        self.ys[k - 1] * (1.0 - w) + self.ys[k] * w
    }
}

/// One preset.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Constant.
    Const(f64),
    /// Affine function.
    Linear {
        /// Offset.
        a: f64,
        /// Slopes.
        b: [f64; 3],
    },
    /// Product of sines.
    Sin {
        /// Amplitude.
        a: f64,
        /// Wave numbers in units of pi.
        k: [f64; 3],
    },
    /// Product of cosines.
    Cos {
        /// Amplitude.
        a: f64,
        /// Wave numbers in units of pi.
        k: [f64; 3],
    },
    /// Gaussian bump.
    Gauss {
        /// Amplitude.
        a: f64,
        /// Center.
        center: [f64; 3],
        /// Width.
        sigma: f64,
    },
    /// Tabulated profile.
    Table(Table),
    /// Harmonic extension of the boundary data.
    Extension,
    /// Per-cell values.
    File(Vec<f64>),
}

/// Signed sum of scaled terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    terms: Vec<(f64, Term)>,
    source: String,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Single term with unit weight.
    pub fn from_term(term: Term, source: impl Into<String>) -> Self {
        Expr {
            terms: vec![(1.0, term)],
            source: source.into(),
        }
    }

    /// Constant expression.
    pub fn constant(v: f64) -> Self {
        Expr::from_term(Term::Const(v), format!("{v}"))
    }

    /// Parses `text`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ExprError> {
        let mut p = Parser {
            s: text.as_bytes(),
            pos: 0,
            base,
        };
        let terms = p.expr()?;
        Ok(Expr {
            terms,
            source: text.trim().to_string(),
        })
    }

    /// Whether the expression references the harmonic extension.
    pub fn uses_extension(&self) -> bool {
        self.terms.iter().any(|(_, t)| matches!(t, Term::Extension))
    }

    /// Whether the expression needs per-cell data.
    pub fn is_cellwise(&self) -> bool {
        self.terms
            .iter()
            .any(|(_, t)| matches!(t, Term::Extension | Term::File(_)))
    }

    /// Value at the point `x`. `extension` replaces the extension term and
    /// `cell` indexes tabulated cell data; both are ignored when unused.
    pub fn eval_with(&self, x: [f64; 3], cell: Option<usize>, extension: f64) -> Result<f64, ExprError> {
        let mut total = 0.0;
        for (w, t) in &self.terms {
            let v = match t {
                Term::Const(a) => *a,
                Term::Linear { a, b } => a + b[0] * x[0] + b[1] * x[1] + b[2] * x[2],
                Term::Sin { a, k } => {
                    let mut v = *a;
                    for (ki, xi) in k.iter().zip(x) {
                        if *ki != 0.0 {
                            v *= (ki * std::f64::consts::PI * xi).sin();
                        }
                    }
                    v
                }
                Term::Cos { a, k } => {
                    let mut v = *a;
                    for (ki, xi) in k.iter().zip(x) {
                        v *= (ki * std::f64::consts::PI * xi).cos();
                    }
                    v
                }
                Term::Gauss { a, center, sigma } => {
                    let r2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
                    a * (-r2 / (2.0 * sigma * sigma)).exp()
                }
                Term::Table(tab) => tab.eval(x[tab.axis]),
                Term::Extension => extension,
                Term::File(vals) => match cell {
                    Some(k) => *vals
                        .get(k)
                        .ok_or_else(|| ExprError(format!("cell {k} beyond tabulated data ({} values)", vals.len())))?,
                    None => return err("tabulated cell data cannot be evaluated on the boundary"),
                },
            };
            total += w * v;
        }
        Ok(total)
    }

    /// Value of a pointwise expression.
    pub fn eval(&self, x: [f64; 3]) -> Result<f64, ExprError> {
        if self.is_cellwise() {
            return err(format!("`{}` is not a pointwise expression", self.source));
        }
        self.eval_with(x, None, 0.0)
    }

    /// Number of tabulated cell values, if any.
    pub fn file_len(&self) -> Option<usize> {
        self.terms.iter().find_map(|(_, t)| match t {
            Term::File(v) => Some(v.len()),
            _ => None,
        })
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    base: &'a Path,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            err(format!("expected `{}` at offset {}", c as char, self.pos))
        }
    }

    fn expr(&mut self) -> Result<Vec<(f64, Term)>, ExprError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if self.peek() == Some(b'-') {
            self.pos += 1;
            sign = -1.0;
        } else if self.peek() == Some(b'+') {
            self.pos += 1;
        }
        loop {
            let (w, t) = self.term()?;
            terms.push((sign * w, t));
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(c) => return err(format!("unexpected `{}` at offset {}", c as char, self.pos)),
            }
            self.pos += 1;
        }
        if terms.is_empty() {
            return err("empty expression");
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<(f64, Term), ExprError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let v = self.number()?;
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    Ok((v, self.preset()?))
                } else {
                    Ok((1.0, Term::Const(v)))
                }
            }
            Some(c) if c.is_ascii_alphabetic() => Ok((1.0, self.preset()?)),
            Some(c) => err(format!("unexpected `{}` at offset {}", c as char, self.pos)),
            None => err("expression ended early"),
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.s.get(self.pos), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        while let Some(&c) = self.s.get(self.pos) {
            let exp_sign = matches!(c, b'-' | b'+') && matches!(self.s.get(self.pos - 1), Some(b'e') | Some(b'E'));
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let txt = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        txt.parse::<f64>()
            .map_err(|_| ExprError(format!("invalid number `{txt}`")))
            .and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    err(format!("non-finite number `{txt}`"))
                }
            })
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while let Some(&c) = self.s.get(self.pos) {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
    }

    fn args(&mut self) -> Result<Vec<f64>, ExprError> {
        self.expect(b'(')?;
        let mut out = vec![self.number()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            out.push(self.number()?);
        }
        self.expect(b')')?;
        Ok(out)
    }

    fn path_arg(&mut self) -> Result<PathBuf, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(&c) = self.s.get(self.pos) {
            if c == b')' {
                break;
            }
            self.pos += 1;
        }
        let raw = String::from_utf8_lossy(&self.s[start..self.pos]).trim().to_string();
        if raw.is_empty() {
            return err("missing file path");
        }
        let p = PathBuf::from(raw);
        Ok(if p.is_absolute() { p } else { self.base.join(p) })
    }

    fn preset(&mut self) -> Result<Term, ExprError> {
        let name = self.ident();
        let triple = |v: &[f64]| -> [f64; 3] {
            let mut k = [0.0; 3];
            k[..v.len()].copy_from_slice(v);
            k
        };
        match name.as_str() {
            "const" => {
                let a = self.args()?;
                if a.len() != 1 {
                    return err("const takes one argument");
                }
                Ok(Term::Const(a[0]))
            }
            "linear" | "sin" | "cos" => {
                let a = self.args()?;
                if !(3..=4).contains(&a.len()) {
                    return err(format!("{name} takes 3 or 4 arguments"));
                }
                let k = triple(&a[1..]);
                Ok(match name.as_str() {
                    "linear" => Term::Linear { a: a[0], b: k },
                    "sin" => Term::Sin { a: a[0], k },
                    _ => Term::Cos { a: a[0], k },
                })
            }
            "gauss" => {
                let a = self.args()?;
                if !(4..=5).contains(&a.len()) {
                    return err("gauss takes 4 or 5 arguments");
                }
                let sigma = a[a.len() - 1];
                if !(sigma > 0.0) {
                    return err("gauss width must be positive");
                }
                Ok(Term::Gauss {
                    a: a[0],
                    center: triple(&a[1..a.len() - 1]),
                    sigma,
                })
            }
            "table" => {
                self.expect(b'(')?;
                let axis = self.number()?;
                self.expect(b',')?;
                let path = self.path_arg()?;
                self.expect(b')')?;
                let (xs, ys) = read_columns(&path)?;
                Table::new(axis as usize, xs, ys).map(Term::Table)
            }
            "file" => {
                self.expect(b'(')?;
                let path = self.path_arg()?;
                self.expect(b')')?;
                Ok(Term::File(read_values(&path)?))
            }
            "extension" => Ok(Term::Extension),
            "" => err(format!("expected a preset at offset {}", self.pos)),
            other => err(format!("unknown preset `{other}`")),
        }
    }
}

fn read_text(path: &Path) -> Result<String, ExprError> {
    std::fs::read_to_string(path).map_err(|e| ExprError(format!("{}: {e}", path.display())))
}

fn parse_numbers(path: &Path, text: &str) -> Result<Vec<f64>, ExprError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| ExprError(format!("{}: invalid number `{t}`", path.display())))
        })
        .collect()
}

/// Reads whitespace- or comma-separated values; `#` starts a comment.
pub fn read_values(path: &Path) -> Result<Vec<f64>, ExprError> {
    parse_numbers(path, &read_text(path)?)
}

/// Reads `x value` pairs, one per line.
pub fn read_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), ExprError> {
    let v = read_values(path)?;
    if v.len() % 2 != 0 {
        return err(format!("{}: expected pairs of numbers", path.display()));
    }
    Ok(v.chunks(2).map(|p| (p[0], p[1])).unzip())
}
