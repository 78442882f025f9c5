//! Dirichlet data and their discrete harmonic extensions.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{BoundaryTrace, CellField};
use crate::grid::Grid;
use crate::poisson::{harmonic_extension, PoissonWorkspace};

/// Boundary traces of the concentrations and the potential together with
/// their harmonic extensions into the box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    /// Concentration traces `gamma_i`.
    pub gamma: Vec<BoundaryTrace>,
    /// Potential trace `W`.
    pub w: BoundaryTrace,
    /// Harmonic extensions `Gamma_i` of `gamma_i`.
    pub big_gamma: Vec<CellField>,
    /// Harmonic extension `Phi_W` of `W`.
    pub phi_w: CellField,
}

/// Harmonically extends every `gamma_i` and `w` into the interior.
///
/// Each extension solves the discrete Laplace equation with the trace as
/// Dirichlet data to relative residual `tol`.
pub fn extend_boundary_data(
    grid: &Grid,
    gamma: Vec<BoundaryTrace>,
    w: BoundaryTrace,
    tol: f64,
) -> Result<BoundaryData> {
    for (species, g) in gamma.iter().enumerate() {
        let value = g.min(grid);
        if !(value > 0.0) {
            return Err(Error::NonPositiveBoundary { species, value });
        }
    }
    let mut ws = PoissonWorkspace::new(grid, tol)?;
    let big_gamma = gamma
        .iter()
        .map(|g| harmonic_extension(&mut ws, g))
        .collect::<Result<Vec<_>>>()?;
    let phi_w = harmonic_extension(&mut ws, &w)?;
    Ok(BoundaryData {
        gamma,
        w,
        big_gamma,
        phi_w,
    })
}

impl BoundaryData {
    /// Number of species.
    pub fn species_count(&self) -> usize {
        self.gamma.len()
    }

    /// Trace `sum_i w_i gamma_i`.
    pub fn gamma_combination(&self, grid: &Grid, weights: &[f64]) -> BoundaryTrace {
        let terms: Vec<(f64, &BoundaryTrace)> = weights.iter().copied().zip(self.gamma.iter()).collect();
        BoundaryTrace::combine(grid, &terms)
    }

    /// Field `sum_i w_i Gamma_i`.
    pub fn extension_combination(&self, weights: &[f64]) -> CellField {
        let n = self.phi_w.len();
        let mut out = alloc::vec![0.0; n];
        for (w, g) in weights.iter().zip(&self.big_gamma) {
            for (o, v) in out.iter_mut().zip(g) {
                *o += w * v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_cells;
    use crate::grid::build_grid;
    use crate::stencil::{neg_laplacian, ScalarBc};
    use alloc::vec;

    #[test]
    fn constant_trace_extends_to_constant() {
        let g = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 2.0)],
            BoundaryTrace::zero(&g),
            1e-12,
        )
        .unwrap();
        assert!(bd.big_gamma[0].iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(bd.phi_w.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn linear_potential_reproduced() {
        let g = build_grid(2, &[1.0, 1.0], &[16, 16]).unwrap();
        let bd = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0)],
            BoundaryTrace::from_fn(&g, |x| x[0]),
            1e-12,
        )
        .unwrap();
        let exact = sample_cells(&g, |x| x[0]);
        for (a, b) in bd.phi_w.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn saddle_second_order() {
        let err = |n: usize| {
            let g = build_grid(2, &[1.0, 1.0], &[n, n]).unwrap();
            let f = |x: [f64; 3]| x[0] * x[0] - x[1] * x[1];
            let bd = extend_boundary_data(
                &g,
                vec![BoundaryTrace::constant(&g, 1.0)],
                BoundaryTrace::from_fn(&g, f),
                1e-12,
            )
            .unwrap();
            let exact = sample_cells(&g, f);
            bd.phi_w
                .iter()
                .zip(&exact)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let e = [err(8), err(16), err(32), err(64)];
        assert!(e[0] < 1e-2);
        let orders: Vec<f64> = (0..3).map(|k| (e[k] / e[k + 1]).log2()).collect();
        assert!(orders.iter().all(|o| *o >= 1.75), "{orders:?}");
        assert!(orders[2] >= 1.9, "{orders:?}");
    }

    #[test]
    fn nonpositive_gamma_rejected() {
        let g = build_grid(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let err = extend_boundary_data(
            &g,
            vec![BoundaryTrace::constant(&g, 1.0), BoundaryTrace::from_fn(&g, |x| x[0] - 0.5)],
            BoundaryTrace::zero(&g),
            1e-10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveBoundary { species: 1, .. }));
    }

    #[test]
    fn extension_is_discretely_harmonic_and_positive() {
        let g = build_grid(2, &[1.0, 1.0], &[12, 12]).unwrap();
        let gamma = BoundaryTrace::from_fn(&g, |x| 1.0 + x[0] * x[1] + 0.5 * (3.0 * x[1]).sin());
        let bd = extend_boundary_data(&g, vec![gamma.clone()], BoundaryTrace::zero(&g), 1e-12).unwrap();
        let lap = neg_laplacian(&g, &bd.big_gamma[0], ScalarBc::Dirichlet(&gamma));
        assert!(lap.iter().all(|v| v.abs() < 1e-9));
        let lo = gamma.min(&g);
        assert!(bd.big_gamma[0].iter().all(|v| *v >= lo - 1e-10));
    }
}
