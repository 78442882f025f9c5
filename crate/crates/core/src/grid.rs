//! Uniform rectangular grids in two or three dimensions.
//!
//! Cells are indexed `i + n0 * (j + n1 * k)`. A two-dimensional grid is stored
//! with a single layer along the third axis so the kernels can loop over three
//! indices uniformly. Faces normal to axis `a` carry `n[a] + 1` entries along
//! that axis; the first and last of them lie on the boundary.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Smallest admissible number of cells along any axis.
pub const MIN_CELLS: usize = 4;

/// Boundary side along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The face at coordinate zero.
    Low,
    /// The face at coordinate `extent`.
    High,
}

/// Axis-aligned box discretized into uniform cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 3],
    extents: [f64; 3],
    spacing: [f64; 3],
}

/// Builds a grid over `[0, extents[0]] x ... ` with `cells[a]` cells per axis.
pub fn build_grid(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Grid> {
    Grid::new(dim, extents, cells)
}

impl Grid {
    /// See [`build_grid`].
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if extents.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and cell counts, got {} and {}",
                extents.len(),
                cells.len()
            )));
        }
        let mut n = [1usize; 3];
        let mut l = [1.0f64; 3];
        let mut h = [1.0f64; 3];
        for a in 0..dim {
            if !(extents[a].is_finite() && extents[a] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {a} must be positive, got {}",
                    extents[a]
                )));
            }
            if cells[a] < MIN_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} needs at least {MIN_CELLS} cells, got {}",
                    cells[a]
                )));
            }
            n[a] = cells[a];
            l[a] = extents[a];
            h[a] = extents[a] / cells[a] as f64;
        }
        Ok(Grid {
            dim,
            cells: n,
            extents: l,
            spacing: h,
        })
    }

    /// Spatial dimension.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis; the third entry is 1 in two dimensions.
    #[inline]
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    /// Physical lengths per axis.
    #[inline]
    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    /// Cell spacing per axis.
    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).fold(f64::INFINITY, f64::min)
    }

    /// Number of cells.
    #[inline]
    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    /// Volume (area in 2D) of one cell.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    /// Volume of the whole box.
    pub fn domain_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extents[a]).product()
    }

    /// Linear index of a cell.
    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.cells[0] * (ijk[1] + self.cells[1] * ijk[2])
    }

    /// Multi-index of a cell.
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.cells[0];
        let rest = idx / self.cells[0];
        [i, rest % self.cells[1], rest / self.cells[1]]
    }

    /// Stride between neighbouring cells along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        }
    }

    /// Center of a cell.
    pub fn cell_center(&self, ijk: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (ijk[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    /// Centers of all cells in linear order.
    pub fn cell_centers(&self) -> Vec<[f64; 3]> {
        (0..self.cell_count())
            .map(|idx| self.cell_center(self.coords(idx)))
            .collect()
    }

    /// Shape of the face array normal to `axis`.
    #[inline]
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.cells;
        d[axis] += 1;
        d
    }

    /// Number of faces normal to `axis`; zero for inactive axes.
    pub fn face_count(&self, axis: usize) -> usize {
        if axis >= self.dim {
            return 0;
        }
        let d = self.face_dims(axis);
        d[0] * d[1] * d[2]
    }

    /// Linear index of a face normal to `axis`; `ijk[axis]` runs over `0..=n`.
    #[inline]
    pub fn face_index(&self, axis: usize, ijk: [usize; 3]) -> usize {
        let d = self.face_dims(axis);
        ijk[0] + d[0] * (ijk[1] + d[1] * ijk[2])
    }

    /// Multi-index of a face normal to `axis`.
    #[inline]
    pub fn face_coords(&self, axis: usize, idx: usize) -> [usize; 3] {
        let d = self.face_dims(axis);
        let i = idx % d[0];
        let rest = idx / d[0];
        [i, rest % d[1], rest / d[1]]
    }

    /// Stride between neighbouring faces along `dir` in the array normal to `axis`.
    #[inline]
    pub fn face_stride(&self, axis: usize, dir: usize) -> usize {
        let d = self.face_dims(axis);
        match dir {
            0 => 1,
            1 => d[0],
            _ => d[0] * d[1],
        }
    }

    /// Center of a face normal to `axis`.
    pub fn face_center(&self, axis: usize, ijk: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = if a == axis {
                ijk[a] as f64 * self.spacing[a]
            } else {
                (ijk[a] as f64 + 0.5) * self.spacing[a]
            };
        }
        x
    }

    /// Whether a face normal to `axis` lies on the boundary.
    #[inline]
    pub fn is_boundary_face(&self, axis: usize, ijk: [usize; 3]) -> bool {
        ijk[axis] == 0 || ijk[axis] == self.cells[axis]
    }

    /// Calls `f(axis, face, lo, hi)` for every face of every active axis,
    /// where `lo`/`hi` are the cells below/above the face along `axis`
    /// (`None` outside the box).
    pub fn for_each_face(&self, mut f: impl FnMut(usize, usize, Option<usize>, Option<usize>)) {
        let n = self.cells;
        for axis in 0..self.dim {
            let d = self.face_dims(axis);
            let cs = self.stride(axis);
            let mut face = 0;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        let ijk = [i, j, k];
                        let fa = ijk[axis];
                        let hi = if fa < n[axis] { Some(self.index(ijk)) } else { None };
                        let lo = if fa > 0 {
                            Some(hi.map_or_else(
                                || {
                                    let mut c = ijk;
                                    c[axis] -= 1;
                                    self.index(c)
                                },
                                |h| h - cs,
                            ))
                        } else {
                            None
                        };
                        f(axis, face, lo, hi);
                        face += 1;
                    }
                }
            }
        }
    }

    /// Calls `f(axis, side, cell, face)` for every boundary face, where `cell`
    /// is the adjacent interior cell and `face` the linear face index.
    pub fn for_each_boundary_face(&self, mut f: impl FnMut(usize, Side, usize, usize)) {
        let n = self.cells;
        for axis in 0..self.dim {
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        let ijk = [i, j, k];
                        if ijk[axis] == 0 {
                            let face = self.face_index(axis, ijk);
                            f(axis, Side::Low, self.index(ijk), face);
                        }
                        if ijk[axis] == n[axis] - 1 {
                            let mut fijk = ijk;
                            fijk[axis] += 1;
                            let face = self.face_index(axis, fijk);
                            f(axis, Side::High, self.index(ijk), face);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid_spacing() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        assert_eq!(g.spacing()[..2], [0.125, 0.125]);
        assert_eq!(g.cell_count(), 64);
        assert!((g.cell_volume() - 0.015625).abs() < 1e-15);
    }

    #[test]
    fn box_grid_spacing() {
        let g = build_grid(3, &[1.0, 2.0, 1.0], &[4, 8, 4]).unwrap();
        assert_eq!(g.spacing(), [0.25, 0.25, 0.25]);
        assert_eq!(g.cell_count(), 128);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_grid(2, &[1.0, 1.0], &[2, 2]).is_err());
        assert!(build_grid(1, &[1.0], &[8]).is_err());
        assert!(build_grid(4, &[1.0; 4], &[8; 4]).is_err());
        assert!(build_grid(2, &[1.0, 0.0], &[8, 8]).is_err());
        assert!(build_grid(2, &[1.0, -1.0], &[8, 8]).is_err());
        assert!(build_grid(2, &[1.0], &[8, 8]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = build_grid(3, &[1.0, 1.0, 1.0], &[4, 5, 6]).unwrap();
        for idx in 0..g.cell_count() {
            assert_eq!(g.index(g.coords(idx)), idx);
        }
        for axis in 0..3 {
            for idx in 0..g.face_count(axis) {
                assert_eq!(g.face_index(axis, g.face_coords(axis, idx)), idx);
            }
        }
    }

    #[test]
    fn boundary_faces_counted_once() {
        let g = build_grid(2, &[1.0, 1.0], &[5, 4]).unwrap();
        let mut count = 0;
        g.for_each_boundary_face(|axis, _, cell, face| {
            let ijk = g.face_coords(axis, face);
            assert!(g.is_boundary_face(axis, ijk));
            assert!(cell < g.cell_count());
            count += 1;
        });
        assert_eq!(count, 2 * 4 + 2 * 5);
    }
}
