use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Householder QR of a square matrix with the sign convention `R_ii > 0`.
///
/// Fails with [`Error::SingularInput`] when some `|R_ii|` falls below
/// `1e-14 * ‖A‖_F`.
pub fn qr_positive(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "qf needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let scale = a.norm();
    let mut r = a.clone();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);

    for k in 0..n {
        let m = n - k;
        let mut v: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let tail: f64 = v[1..].iter().map(|x| x * x).sum();
        if tail == 0.0 {
            reflectors.push((v, 0.0));
            continue;
        }
        let norm = (v[0] * v[0] + tail).sqrt();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let beta = 2.0 / v.iter().map(|x| x * x).sum::<f64>();
        for j in k..n {
            let dot: f64 = (0..m).map(|i| v[i] * r[(k + i, j)]).sum();
            let f = beta * dot;
            for i in 0..m {
                r[(k + i, j)] -= f * v[i];
            }
        }
        for i in (k + 1)..n {
            r[(i, k)] = 0.0;
        }
        reflectors.push((v, beta));
    }

    let smallest = (0..n).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if n > 0 && smallest <= 1e-14 * scale {
        return Err(Error::SingularInput);
    }

    // Q = H_0 H_1 ... H_{n-1}, accumulated from the right end.
    let mut q = DMatrix::<f64>::identity(n, n);
    for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        let m = n - k;
        for j in k..n {
            let dot: f64 = (0..m).map(|i| v[i] * q[(k + i, j)]).sum();
            let f = beta * dot;
            for i in 0..m {
                q[(k + i, j)] -= f * v[i];
            }
        }
    }

    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    Ok((q, r))
}

/// The orthogonal factor of the QR decomposition whose `R` factor has a
/// positive diagonal.
pub fn qf(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    qr_positive(a).map(|(q, _)| q)
}
