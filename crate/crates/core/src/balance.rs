//! Sinkhorn-Knopp balancing of positive matrices onto the doubly stochastic
//! matrices.
//!
//! The scaling vectors are kept explicitly, so the returned matrix is always
//! of the form `D1 * A * D2` for positive diagonal `D1`, `D2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Output of [`sinkhorn`].
#[derive(Debug, Clone)]
pub struct BalanceResult {
    pub balanced: DMatrix<f64>,
    /// Number of full row+column sweeps performed.
    pub iterations: usize,
    /// Largest deviation of a row or column sum from 1.
    pub residual: f64,
    pub row_scaling: DVector<f64>,
    pub col_scaling: DVector<f64>,
}

/// Maximum deviation of any row sum or column sum of `a` from 1.
pub fn stochastic_residual(a: &DMatrix<f64>) -> f64 {
    let rows = a
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let cols = a
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    rows.max(cols)
}

/// Balance a strictly positive square matrix by alternating row and column
/// normalization until every row and column sum lies within `tol` of 1.
pub fn sinkhorn(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<BalanceResult> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    for j in 0..n {
        for i in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveInput { row: i, col: j, value: v });
            }
        }
    }

    let mut r = DVector::from_element(n, 1.0);
    let mut c = DVector::from_element(n, 1.0);
    let mut balanced = a.clone();
    let mut residual = stochastic_residual(&balanced);
    let mut iterations = 0;

    while residual > tol {
        if iterations == max_iter {
            return Err(Error::NotConverged { max_iter });
        }
        // rows: r_i = 1 / sum_j a_ij c_j
        let ac = a * &c;
        for i in 0..n {
            r[i] = 1.0 / ac[i];
        }
        // columns: c_j = 1 / sum_i r_i a_ij
        let atr = a.tr_mul(&r);
        for j in 0..n {
            c[j] = 1.0 / atr[j];
        }
        iterations += 1;
        for j in 0..n {
            for i in 0..n {
                balanced[(i, j)] = r[i] * a[(i, j)] * c[j];
            }
        }
        residual = stochastic_residual(&balanced);
    }

    Ok(BalanceResult {
        balanced,
        iterations,
        residual,
        row_scaling: r,
        col_scaling: c,
    })
}

/// [`sinkhorn`] with the default tolerance and sweep cap.
pub fn balance(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sinkhorn(a, DEFAULT_TOL, DEFAULT_MAX_ITER).map(|r| r.balanced)
}
