//! Field containers: cell-centered scalars, face-staggered vectors and
//! boundary traces.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Grid, Side};

/// Cell-centered scalar field in the grid's linear cell order.
pub type CellField = Vec<f64>;

/// A vector field stored on faces: component `a` lives on faces normal to
/// axis `a`. Components of inactive axes are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    /// Per-axis face values.
    pub comps: [Vec<f64>; 3],
}

impl FaceField {
    /// All-zero field shaped for `grid`.
    pub fn zeros(grid: &Grid) -> Self {
        FaceField {
            comps: [
                vec![0.0; grid.face_count(0)],
                vec![0.0; grid.face_count(1)],
                vec![0.0; grid.face_count(2)],
            ],
        }
    }

    /// Samples `f(axis, x)` at every face center.
    pub fn from_fn(grid: &Grid, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for axis in 0..grid.dim() {
            for (idx, v) in out.comps[axis].iter_mut().enumerate() {
                *v = f(axis, grid.face_center(axis, grid.face_coords(axis, idx)));
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| f64::max(m, crate::math::abs(*v)))
    }

    /// Whether every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.comps.iter().flat_map(|c| c.iter()).all(|v| v.is_finite())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &FaceField) {
        for (dst, src) in self.comps.iter_mut().zip(other.comps.iter()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }
}

/// Dirichlet data sampled at the centers of boundary faces.
///
/// Stored in a face-shaped array; only boundary slots are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace(FaceField);

impl BoundaryTrace {
    /// Samples `f` at every boundary face center.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut data = FaceField::zeros(grid);
        grid.for_each_boundary_face(|axis, _, _, face| {
            let x = grid.face_center(axis, grid.face_coords(axis, face));
            data.comps[axis][face] = f(x);
        });
        BoundaryTrace(data)
    }

    /// Constant trace.
    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self::from_fn(grid, |_| value)
    }

    /// Trace whose every slot is zero.
    pub fn zero(grid: &Grid) -> Self {
        BoundaryTrace(FaceField::zeros(grid))
    }

    /// Value on boundary face `face` normal to `axis`.
    #[inline]
    pub fn at(&self, axis: usize, face: usize) -> f64 {
        self.0.comps[axis][face]
    }

    /// Value on the boundary face next to a boundary cell.
    pub fn at_cell(&self, grid: &Grid, axis: usize, side: Side, cell: usize) -> f64 {
        let mut ijk = grid.coords(cell);
        if side == Side::High {
            ijk[axis] += 1;
        }
        self.0.comps[axis][grid.face_index(axis, ijk)]
    }

    /// All boundary values, in the order of [`Grid::for_each_boundary_face`].
    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        let mut out = Vec::new();
        grid.for_each_boundary_face(|axis, _, _, face| out.push(self.0.comps[axis][face]));
        out
    }

    /// Smallest boundary value.
    pub fn min(&self, grid: &Grid) -> f64 {
        self.values(grid).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Largest boundary value.
    pub fn max(&self, grid: &Grid) -> f64 {
        self.values(grid).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every boundary value.
    pub fn map(&self, grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let mut out = FaceField::zeros(grid);
        grid.for_each_boundary_face(|axis, _, _, face| {
            out.comps[axis][face] = f(self.0.comps[axis][face]);
        });
        BoundaryTrace(out)
    }

    /// Pointwise linear combination `sum_k w_k * traces[k]`.
    pub fn combine(grid: &Grid, terms: &[(f64, &BoundaryTrace)]) -> Self {
        let mut out = FaceField::zeros(grid);
        grid.for_each_boundary_face(|axis, _, _, face| {
            out.comps[axis][face] = terms.iter().map(|(w, t)| w * t.0.comps[axis][face]).sum();
        });
        BoundaryTrace(out)
    }
}

/// Sum of `f` over cells times the cell volume (midpoint quadrature).
pub fn integrate(grid: &Grid, f: &[f64]) -> f64 {
    grid.cell_volume() * f.iter().sum::<f64>()
}

/// Discrete `L^p` norm of a cell field.
pub fn lp_norm(grid: &Grid, f: &[f64], p: u32) -> f64 {
    let s: f64 = f.iter().map(|v| crate::math::powi(crate::math::abs(*v), p)).sum();
    crate::math::pow(grid.cell_volume() * s, 1.0 / p as f64)
}

/// Discrete `L^2` norm of a cell field.
pub fn l2_norm(grid: &Grid, f: &[f64]) -> f64 {
    crate::math::sqrt(grid.cell_volume() * f.iter().map(|v| v * v).sum::<f64>())
}

/// Samples `f` at every cell center.
pub fn sample_cells(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> CellField {
    (0..grid.cell_count())
        .map(|idx| f(grid.cell_center(grid.coords(idx))))
        .collect()
}

/// Largest absolute entry.
pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| f64::max(m, crate::math::abs(*v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn trace_lookup_matches_face_center() {
        let g = build_grid(2, &[1.0, 2.0], &[4, 8]).unwrap();
        let t = BoundaryTrace::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        g.for_each_boundary_face(|axis, side, cell, face| {
            let x = g.face_center(axis, g.face_coords(axis, face));
            assert_eq!(t.at_cell(&g, axis, side, cell), x[0] + 10.0 * x[1]);
        });
    }

    #[test]
    fn norms_of_constant() {
        let g = build_grid(2, &[2.0, 1.0], &[8, 4]).unwrap();
        let f = vec![3.0; g.cell_count()];
        assert!((integrate(&g, &f) - 6.0).abs() < 1e-14);
        assert!((l2_norm(&g, &f) - (18.0f64).sqrt()).abs() < 1e-13);
        assert!((lp_norm(&g, &f, 4) - (162.0f64).powf(0.25)).abs() < 1e-13);
    }
}
