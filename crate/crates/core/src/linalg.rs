//! Preconditioned conjugate gradients and a separable eigenbasis solver for
//! the constant-coefficient Laplacians on a box.
//!
//! Both the cell-centered Dirichlet Laplacian (ghost `-x` at the walls) and
//! the Neumann Laplacian (ghost `x`) diagonalize in tensor products of 1D
//! sine / cosine bases:
//!
//! * Dirichlet: `v_k(i) = sin(pi (k+1) (i+1/2) / n)`, `lambda_k = 4/h^2 sin^2(pi (k+1) / 2n)`
//! * Neumann:   `v_k(i) = cos(pi k (i+1/2) / n)`,     `lambda_k = 4/h^2 sin^2(pi k / 2n)`
//!
//! Used as a preconditioner the basis inverts the operator exactly, so CG
//! converges in one or two iterations; the residual check stays in charge of
//! the stopping decision.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    /// Iterations performed.
    pub iterations: usize,
    /// Final Euclidean residual norm.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned CG for `A x = b` starting from the supplied `x`.
///
/// Stops once `||b - A x||_2 <= abs_tol`. With `singular = true` the operator
/// is taken to have the constants as its kernel: `b` and every residual are
/// projected onto mean-free vectors and the returned `x` has zero mean.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    abs_tol: f64,
    max_iter: usize,
    singular: bool,
) -> Result<SolveStats> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    if singular {
        remove_mean(&mut r);
    }
    let mut rnorm = math::sqrt(dot(&r, &r));
    if !rnorm.is_finite() {
        return Err(Error::NonFinite("solver right-hand side"));
    }
    if rnorm <= abs_tol {
        if singular {
            remove_mean(x);
        }
        return Ok(SolveStats {
            iterations: 0,
            residual: rnorm,
        });
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    if singular {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if singular {
            remove_mean(&mut r);
        }
        rnorm = math::sqrt(dot(&r, &r));
        if rnorm <= abs_tol {
            if singular {
                remove_mean(x);
            }
            return Ok(SolveStats {
                iterations: it,
                residual: rnorm,
            });
        }
        precondition(&r, &mut z);
        if singular {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: rnorm,
    })
}

/// Boundary type of a 1D factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Ghost `-x` at both ends (cell-centered Dirichlet).
    Dirichlet,
    /// Ghost `x` at both ends (cell-centered Neumann).
    Neumann,
}

#[derive(Debug, Clone)]
struct AxisBasis {
    n: usize,
    // Row k holds the k-th orthonormal eigenvector.
    vectors: Vec<f64>,
    transposed: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl AxisBasis {
    fn new(kind: BasisKind, n: usize, h: f64) -> Self {
        let mut vectors = vec![0.0; n * n];
        let mut eigenvalues = vec![0.0; n];
        for k in 0..n {
            let (freq, lam_arg) = match kind {
                BasisKind::Dirichlet => ((k + 1) as f64, (k + 1) as f64),
                BasisKind::Neumann => (k as f64, k as f64),
            };
            let row = &mut vectors[k * n..(k + 1) * n];
            for (i, v) in row.iter_mut().enumerate() {
                let arg = PI * freq * (i as f64 + 0.5) / n as f64;
                *v = match kind {
                    BasisKind::Dirichlet => math::sin(arg),
                    BasisKind::Neumann => math::cos(arg),
                };
            }
            let norm = math::sqrt(dot(row, row));
            row.iter_mut().for_each(|v| *v /= norm);
            let s = math::sin(PI * lam_arg / (2.0 * n as f64));
            eigenvalues[k] = 4.0 * s * s / (h * h);
        }
        let mut transposed = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                transposed[i * n + k] = vectors[k * n + i];
            }
        }
        AxisBasis {
            n,
            vectors,
            transposed,
            eigenvalues,
        }
    }
}

/// Exact inverse of the homogeneous cell-centered Laplacian on a box via
/// separable eigenvector transforms.
#[derive(Debug, Clone)]
pub struct SeparableSolver {
    kind: BasisKind,
    dim: usize,
    cells: [usize; 3],
    axes: Vec<AxisBasis>,
}

impl SeparableSolver {
    /// Builds the per-axis bases for `grid`.
    pub fn new(grid: &Grid, kind: BasisKind) -> Self {
        let axes = (0..grid.dim())
            .map(|a| AxisBasis::new(kind, grid.cells()[a], grid.spacing()[a]))
            .collect();
        SeparableSolver {
            kind,
            dim: grid.dim(),
            cells: grid.cells(),
            axes,
        }
    }

    fn transform(&self, data: &mut [f64], axis: usize, forward: bool, tmp: &mut Vec<f64>) {
        let basis = &self.axes[axis];
        let n = basis.n;
        // mat[out * n + i] is the coefficient of input i in output out.
        let mat = if forward { &basis.vectors } else { &basis.transposed };
        let stride = match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        };
        let block = stride * n;
        tmp.resize(block, 0.0);
        for chunk in data.chunks_exact_mut(block) {
            tmp.copy_from_slice(chunk);
            if stride == 1 {
                for (out, d) in chunk.iter_mut().enumerate() {
                    *d = dot(&mat[out * n..(out + 1) * n], tmp);
                }
                continue;
            }
            for out in 0..n {
                let dst = &mut chunk[out * stride..(out + 1) * stride];
                dst.iter_mut().for_each(|v| *v = 0.0);
                for (i, coef) in mat[out * n..(out + 1) * n].iter().enumerate() {
                    for (d, s) in dst.iter_mut().zip(&tmp[i * stride..(i + 1) * stride]) {
                        *d += coef * s;
                    }
                }
            }
        }
    }

    /// `x = A^+ b` for the homogeneous `-Laplacian_h` (pseudo-inverse in the
    /// Neumann case, whose result is mean-free).
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        x.copy_from_slice(b);
        let mut tmp = Vec::new();
        for a in 0..self.dim {
            self.transform(x, a, true, &mut tmp);
        }
        let n = self.cells;
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let idx = i + n[0] * (j + n[1] * k);
                    let mut lam = self.axes[0].eigenvalues[i] + self.axes[1].eigenvalues[j];
                    if self.dim == 3 {
                        lam += self.axes[2].eigenvalues[k];
                    }
                    x[idx] = if lam > 0.0 { x[idx] / lam } else { 0.0 };
                }
            }
        }
        for a in 0..self.dim {
            self.transform(x, a, false, &mut tmp);
        }
        if self.kind == BasisKind::Neumann {
            remove_mean(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::stencil::apply_neg_laplacian_homogeneous;

    #[test]
    fn separable_solver_inverts_dirichlet_operator() {
        for (dim, ext, cells) in [
            (2usize, &[1.0, 1.7][..], &[6usize, 9][..]),
            (3, &[1.0, 0.5, 2.0][..], &[4, 5, 7][..]),
        ] {
            let g = build_grid(dim, ext, cells).unwrap();
            let n = g.cell_count();
            let b: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) - 4.0).collect();
            let s = SeparableSolver::new(&g, BasisKind::Dirichlet);
            let mut x = vec![0.0; n];
            s.solve(&b, &mut x);
            let mut ax = vec![0.0; n];
            apply_neg_laplacian_homogeneous(&g, true, &x, &mut ax);
            for (p, q) in ax.iter().zip(&b) {
                assert!((p - q).abs() < 1e-10, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn separable_solver_pseudo_inverts_neumann_operator() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 5]).unwrap();
        let n = g.cell_count();
        let mut b: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64) - 2.0).collect();
        remove_mean(&mut b);
        let s = SeparableSolver::new(&g, BasisKind::Neumann);
        let mut x = vec![0.0; n];
        s.solve(&b, &mut x);
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
        let mut ax = vec![0.0; n];
        apply_neg_laplacian_homogeneous(&g, false, &x, &mut ax);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_cg_agrees_with_basis_cg() {
        let g = build_grid(2, &[1.0, 1.0], &[10, 10]).unwrap();
        let n = g.cell_count();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let op = |x: &[f64], y: &mut [f64]| apply_neg_laplacian_homogeneous(&g, true, x, y);
        let diag = crate::stencil::neg_laplacian_diagonal(&g, true);
        let mut x1 = vec![0.0; n];
        let s1 = conjugate_gradient(
            op,
            |r, z| {
                for i in 0..r.len() {
                    z[i] = r[i] / diag[i];
                }
            },
            &b,
            &mut x1,
            1e-12,
            10 * n,
            false,
        )
        .unwrap();
        let sep = SeparableSolver::new(&g, BasisKind::Dirichlet);
        let mut x2 = vec![0.0; n];
        let s2 = conjugate_gradient(op, |r, z| sep.solve(r, z), &b, &mut x2, 1e-12, 10 * n, false)
            .unwrap();
        assert!(s2.iterations <= 2, "{s2:?}");
        assert!(s1.iterations > s2.iterations);
        for (a, b) in x1.iter().zip(&x2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let n = g.cell_count();
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = conjugate_gradient(
            |x, y| apply_neg_laplacian_homogeneous(&g, true, x, y),
            |r, z| z.copy_from_slice(r),
            &b,
            &mut x,
            1e-14,
            3,
            false,
        )
        .unwrap_err();
        match err {
            Error::SolverDiverged {
                iterations,
                residual,
            } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
