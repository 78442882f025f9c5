//! Finite-difference stencils on cell-centered data.
//!
//! Dirichlet data enter through a ghost value `2 g - interior` one cell width
//! outside the boundary, so the gradient on a boundary face is
//! `2 (interior - g) / h` up to orientation.

use alloc::vec;

use crate::field::{BoundaryTrace, CellField, FaceField};
use crate::grid::Grid;

/// Boundary condition for a cell-centered scalar.
#[derive(Debug, Clone, Copy)]
pub enum ScalarBc<'a> {
    /// Homogeneous Dirichlet data.
    Zero,
    /// Inhomogeneous Dirichlet data.
    Dirichlet(&'a BoundaryTrace),
    /// Zero normal derivative.
    Neumann,
}

impl ScalarBc<'_> {
    #[inline]
    fn value(&self, axis: usize, face: usize) -> f64 {
        match self {
            ScalarBc::Dirichlet(t) => t.at(axis, face),
            _ => 0.0,
        }
    }
}

/// Face-normal derivative of a cell field. Second order on interior faces.
pub fn face_gradient(grid: &Grid, field: &[f64], bc: ScalarBc<'_>) -> FaceField {
    let mut out = FaceField::zeros(grid);
    let n = grid.cells();
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let d = grid.face_dims(axis);
        let cs = grid.stride(axis);
        let comp = &mut out.comps[axis];
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let fijk = [i, j, k];
                    let face = grid.face_index(axis, fijk);
                    let f = fijk[axis];
                    comp[face] = if f == 0 {
                        let r = grid.index(fijk);
                        match bc {
                            ScalarBc::Neumann => 0.0,
                            _ => 2.0 * (field[r] - bc.value(axis, face)) / h,
                        }
                    } else if f == n[axis] {
                        let mut cijk = fijk;
                        cijk[axis] -= 1;
                        let l = grid.index(cijk);
                        match bc {
                            ScalarBc::Neumann => 0.0,
                            _ => 2.0 * (bc.value(axis, face) - field[l]) / h,
                        }
                    } else {
                        let r = grid.index(fijk);
                        (field[r] - field[r - cs]) / h
                    };
                }
            }
        }
    }
    out
}

/// Face values of a cell field: arithmetic mean on interior faces, the
/// Dirichlet value on boundary faces (zero for [`ScalarBc::Zero`]; the
/// adjacent cell value for [`ScalarBc::Neumann`]).
pub fn face_average(grid: &Grid, field: &[f64], bc: ScalarBc<'_>) -> FaceField {
    let mut out = FaceField::zeros(grid);
    let n = grid.cells();
    for axis in 0..grid.dim() {
        let d = grid.face_dims(axis);
        let cs = grid.stride(axis);
        let comp = &mut out.comps[axis];
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let fijk = [i, j, k];
                    let face = grid.face_index(axis, fijk);
                    let f = fijk[axis];
                    comp[face] = if f == 0 || f == n[axis] {
                        match bc {
                            ScalarBc::Neumann => {
                                let mut cijk = fijk;
                                if f == n[axis] {
                                    cijk[axis] -= 1;
                                }
                                field[grid.index(cijk)]
                            }
                            _ => bc.value(axis, face),
                        }
                    } else {
                        let r = grid.index(fijk);
                        0.5 * (field[r] + field[r - cs])
                    };
                }
            }
        }
    }
    out
}

/// Averages each face component onto cell centers.
pub fn faces_to_cells(grid: &Grid, faces: &FaceField) -> [CellField; 3] {
    let nc = grid.cell_count();
    let mut out = [vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]];
    for axis in 0..grid.dim() {
        let fs = grid.face_stride(axis, axis);
        for (idx, v) in out[axis].iter_mut().enumerate() {
            let lo = grid.face_index(axis, grid.coords(idx));
            *v = 0.5 * (faces.comps[axis][lo] + faces.comps[axis][lo + fs]);
        }
    }
    out
}

/// Cell-centered gradient: face derivatives averaged to the cell center.
pub fn cell_gradient(grid: &Grid, field: &[f64], bc: ScalarBc<'_>) -> [CellField; 3] {
    faces_to_cells(grid, &face_gradient(grid, field, bc))
}

/// `|grad f|^2` per cell: squared face derivatives averaged onto the cell.
///
/// Its midpoint integral equals `<-Laplacian_h f, f>` plus boundary terms, so
/// for homogeneous Dirichlet data it is exactly the discrete Dirichlet form.
pub fn grad_sq_cells(grid: &Grid, field: &[f64], bc: ScalarBc<'_>) -> CellField {
    face_sq_to_cells(grid, &face_gradient(grid, field, bc))
}

/// Per-cell mean over each axis of the squared face values, summed over axes.
pub fn face_sq_to_cells(grid: &Grid, faces: &FaceField) -> CellField {
    let mut out = vec![0.0; grid.cell_count()];
    for axis in 0..grid.dim() {
        let fs = grid.face_stride(axis, axis);
        let comp = &faces.comps[axis];
        for (idx, o) in out.iter_mut().enumerate() {
            let lo = grid.face_index(axis, grid.coords(idx));
            *o += 0.5 * (comp[lo] * comp[lo] + comp[lo + fs] * comp[lo + fs]);
        }
    }
    out
}

/// Per-cell mean over each axis of the face products `a * b`.
pub fn face_dot_to_cells(grid: &Grid, a: &FaceField, b: &FaceField) -> CellField {
    let mut out = vec![0.0; grid.cell_count()];
    for axis in 0..grid.dim() {
        let fs = grid.face_stride(axis, axis);
        let (ca, cb) = (&a.comps[axis], &b.comps[axis]);
        for (idx, o) in out.iter_mut().enumerate() {
            let lo = grid.face_index(axis, grid.coords(idx));
            *o += 0.5 * (ca[lo] * cb[lo] + ca[lo + fs] * cb[lo + fs]);
        }
    }
    out
}

/// Discrete divergence of a face field onto cells.
pub fn divergence(grid: &Grid, flux: &FaceField) -> CellField {
    let mut out = vec![0.0; grid.cell_count()];
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let fs = grid.face_stride(axis, axis);
        let comp = &flux.comps[axis];
        for (idx, o) in out.iter_mut().enumerate() {
            let lo = grid.face_index(axis, grid.coords(idx));
            *o += (comp[lo + fs] - comp[lo]) / h;
        }
    }
    out
}

/// `-Laplacian_h f` with the given boundary data.
pub fn neg_laplacian(grid: &Grid, field: &[f64], bc: ScalarBc<'_>) -> CellField {
    let mut out = divergence(grid, &face_gradient(grid, field, bc));
    for v in out.iter_mut() {
        *v = -*v;
    }
    out
}

/// Matrix-free `y = -Laplacian_h x` with homogeneous Dirichlet (`dirichlet =
/// true`) or homogeneous Neumann data. This is the SPD (resp. semidefinite)
/// operator handed to the iterative solvers.
pub fn apply_neg_laplacian_homogeneous(grid: &Grid, dirichlet: bool, x: &[f64], y: &mut [f64]) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    let mut inv_h2 = [0.0; 3];
    for a in 0..dim {
        inv_h2[a] = 1.0 / (h[a] * h[a]);
    }
    let wall = if dirichlet { 2.0 } else { 0.0 };
    let sx = 1;
    let sy = n[0];
    let sz = n[0] * n[1];
    for k in 0..n[2] {
        for j in 0..n[1] {
            let row = n[0] * (j + n[1] * k);
            for i in 0..n[0] {
                let c = row + i;
                let xc = x[c];
                let mut acc = 0.0;
                acc += inv_h2[0]
                    * (if i > 0 { xc - x[c - sx] } else { wall * xc }
                        + if i + 1 < n[0] { xc - x[c + sx] } else { wall * xc });
                acc += inv_h2[1]
                    * (if j > 0 { xc - x[c - sy] } else { wall * xc }
                        + if j + 1 < n[1] { xc - x[c + sy] } else { wall * xc });
                if dim == 3 {
                    acc += inv_h2[2]
                        * (if k > 0 { xc - x[c - sz] } else { wall * xc }
                            + if k + 1 < n[2] { xc - x[c + sz] } else { wall * xc });
                }
                y[c] = acc;
            }
        }
    }
}

/// Diagonal of the operator in [`apply_neg_laplacian_homogeneous`].
pub fn neg_laplacian_diagonal(grid: &Grid, dirichlet: bool) -> CellField {
    let n = grid.cells();
    let h = grid.spacing();
    let wall = if dirichlet { 3.0 } else { 1.0 };
    (0..grid.cell_count())
        .map(|idx| {
            let ijk = grid.coords(idx);
            (0..grid.dim())
                .map(|a| {
                    let walls = (ijk[a] == 0) as u32 + (ijk[a] + 1 == n[a]) as u32;
                    let w = match walls {
                        0 => 2.0,
                        _ => wall,
                    };
                    w / (h[a] * h[a])
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_cells;
    use crate::grid::build_grid;

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let f = vec![3.0; g.cell_count()];
        let t = BoundaryTrace::constant(&g, 3.0);
        assert!(face_gradient(&g, &f, ScalarBc::Dirichlet(&t)).max_abs() < 1e-14);
    }

    #[test]
    fn gradient_exact_for_linear_everywhere() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let f = sample_cells(&g, |x| 2.0 * x[0] - x[1]);
        let t = BoundaryTrace::from_fn(&g, |x| 2.0 * x[0] - x[1]);
        let gr = face_gradient(&g, &f, ScalarBc::Dirichlet(&t));
        assert!(gr.comps[0].iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(gr.comps[1].iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn operator_matches_generic_laplacian() {
        for dim in [2, 3] {
            let cells: &[usize] = if dim == 2 { &[5, 7] } else { &[4, 5, 6] };
            let ext: &[f64] = if dim == 2 { &[1.0, 1.3] } else { &[1.0, 0.7, 1.1] };
            let g = build_grid(dim, ext, cells).unwrap();
            let x = sample_cells(&g, |p| (3.0 * p[0]).sin() + p[1] * p[1] - p[2]);
            let mut y = vec![0.0; g.cell_count()];
            apply_neg_laplacian_homogeneous(&g, true, &x, &mut y);
            let z = neg_laplacian(&g, &x, ScalarBc::Zero);
            for (a, b) in y.iter().zip(&z) {
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
            }
            apply_neg_laplacian_homogeneous(&g, false, &x, &mut y);
            let z = neg_laplacian(&g, &x, ScalarBc::Neumann);
            for (a, b) in y.iter().zip(&z) {
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn diagonal_matches_operator() {
        let g = build_grid(2, &[1.0, 2.0], &[4, 6]).unwrap();
        for dirichlet in [true, false] {
            let diag = neg_laplacian_diagonal(&g, dirichlet);
            let mut e = vec![0.0; g.cell_count()];
            let mut y = vec![0.0; g.cell_count()];
            for idx in 0..g.cell_count() {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[idx] = 1.0;
                apply_neg_laplacian_homogeneous(&g, dirichlet, &e, &mut y);
                assert!((y[idx] - diag[idx]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn divergence_of_gradient_sums_to_boundary_flux() {
        let g = build_grid(2, &[1.0, 1.0], &[6, 6]).unwrap();
        let f = sample_cells(&g, |x| x[0] * x[0]);
        let t = BoundaryTrace::from_fn(&g, |x| x[0] * x[0]);
        let gr = face_gradient(&g, &f, ScalarBc::Dirichlet(&t));
        let div = divergence(&g, &gr);
        // Telescoping: integral of the divergence equals the net boundary flux.
        let total: f64 = div.iter().sum::<f64>() * g.cell_volume();
        let mut boundary = 0.0;
        g.for_each_boundary_face(|axis, side, _, face| {
            let sign = if side == crate::grid::Side::High { 1.0 } else { -1.0 };
            let area = g.cell_volume() / g.spacing()[axis];
            boundary += sign * gr.comps[axis][face] * area;
        });
        assert!((total - boundary).abs() < 1e-12);
    }
}

#[cfg(test)]
mod form_tests {
    use super::*;
    use crate::field::{integrate, sample_cells};
    use crate::grid::build_grid;

    #[test]
    fn cell_average_of_squares_is_dirichlet_form() {
        let g = build_grid(2, &[1.0, 1.5], &[6, 9]).unwrap();
        let f = sample_cells(&g, |x| (2.0 * x[0]).sin() * x[1] + 0.3);
        let lhs = integrate(&g, &grad_sq_cells(&g, &f, ScalarBc::Zero));
        let lap = neg_laplacian(&g, &f, ScalarBc::Zero);
        let rhs: f64 = integrate(&g, &lap.iter().zip(&f).map(|(a, b)| a * b).collect::<CellField>());
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
    }
}
