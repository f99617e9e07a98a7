//! Coefficients of a convergent sequence of combinations of a fixed basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qualification::FunctionalFamily;

pub const DEFAULT_CAUCHY_TOL: f64 = 1e-6;

/// Relative singular value below which a basis counts as dependent.
const RANK_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// `coefficients[h]` solves `sum_i c_i basis_i = combos[h]`.
    pub coefficients: Vec<DVector<f64>>,
    /// `|basis' c - combo|_inf` per combination.
    pub residuals: Vec<f64>,
    /// Per basis index, whether the last successive differences are below tolerance.
    pub convergent: Vec<bool>,
    pub cauchy_tol: f64,
}

impl Recovery {
    /// Coefficients of the last combination.
    pub fn limit(&self) -> Option<&DVector<f64>> {
        self.coefficients.last()
    }

    pub fn all_convergent(&self) -> bool {
        self.convergent.iter().all(|c| *c)
    }
}

fn basis_matrix(rows: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, rows.len());
    for (i, r) in rows.iter().enumerate() {
        m.set_column(i, r);
    }
    m
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > RANK_REL * top.max(f64::MIN_POSITIVE)).count()
}

/// Least-squares coefficients `c` minimizing `|sum_i c_i rows_i - combo|_2`.
/// An empty basis gives an empty vector.
pub fn least_squares_coefficients(rows: &[DVector<f64>], combo: &DVector<f64>) -> DVector<f64> {
    if rows.is_empty() {
        return DVector::zeros(0);
    }
    let m = basis_matrix(rows, combo.len());
    m.svd(true, true)
        .solve(combo, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(rows.len()))
}

/// Successive-difference test shared with horizon sweeps: the last
/// `min(3, n - 1)` differences must be at most `tol`; fewer than two terms
/// never count as convergent.
pub fn cauchy_tail(diffs: &[f64], tol: f64) -> bool {
    if diffs.is_empty() {
        return false;
    }
    let k = diffs.len().min(3);
    diffs[diffs.len() - k..].iter().all(|d| *d <= tol)
}

pub fn recover_coefficients(basis: &FunctionalFamily, combos: &[DVector<f64>]) -> Result<Recovery> {
    recover_coefficients_with_tol(basis, combos, DEFAULT_CAUCHY_TOL)
}

pub fn recover_coefficients_with_tol(
    basis: &FunctionalFamily,
    combos: &[DVector<f64>],
    cauchy_tol: f64,
) -> Result<Recovery> {
    let dim = basis.dim();
    let m = basis_matrix(&basis.rows, dim);
    let r = rank(&m);
    if r < basis.len() {
        return Err(Error::RankDeficient {
            rank: r,
            rows: basis.len(),
        });
    }
    let mut coefficients = Vec::with_capacity(combos.len());
    let mut residuals = Vec::with_capacity(combos.len());
    for (i, c) in combos.iter().enumerate() {
        if c.len() != dim {
            return Err(Error::Dimension {
                context: format!("combination {i}"),
                expected: dim,
                found: c.len(),
            });
        }
        let coef = least_squares_coefficients(&basis.rows, c);
        residuals.push((&m * &coef - c).amax());
        coefficients.push(coef);
    }
    let convergent = (0..basis.len())
        .map(|i| {
            let diffs: Vec<f64> = coefficients.windows(2).map(|w| (w[1][i] - w[0][i]).abs()).collect();
            cauchy_tail(&diffs, cauchy_tol)
        })
        .collect();
    Ok(Recovery {
        coefficients,
        residuals,
        convergent,
        cauchy_tol,
    })
}
