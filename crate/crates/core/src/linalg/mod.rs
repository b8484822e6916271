//! Dense kernels: real Schur decomposition with standardized 2x2 blocks, QR
//! with a positive-diagonal R factor, and a Bartels-Stewart Sylvester solver.

mod qr;
mod schur;
mod sylvester;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use qr::{qf, qr_positive};
pub use schur::{real_schur, standardize_blocks, SchurForm, DEFAULT_DEFLATION_TOL};
pub use sylvester::sylvester_solve;

/// Diagonal block sizes (1 or 2) of an upper quasi-triangular matrix, read
/// off its nonzero subdiagonal entries.
pub fn detect_block_sizes(t: &DMatrix<f64>) -> Vec<usize> {
    let n = t.nrows();
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            sizes.push(2);
            i += 2;
        } else {
            sizes.push(1);
            i += 1;
        }
    }
    sizes
}

/// Eigenvalues of a 2x2 real matrix, returned as `(first, second)` with the
/// positive imaginary part first when the pair is complex.
pub fn eig2x2(a: f64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let mid = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (Complex64::new(mid + r, 0.0), Complex64::new(mid - r, 0.0))
    } else {
        let r = (-disc).sqrt();
        (Complex64::new(mid, r), Complex64::new(mid, -r))
    }
}

/// Eigenvalues of a quasi-triangular matrix, block by block. A standardized
/// block `[[a, b], [c, a]]` yields `a ± i·sqrt(-bc)`.
pub fn quasi_eigenvalues(t: &DMatrix<f64>, block_sizes: &[usize]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(t.nrows());
    let mut i = 0;
    for &size in block_sizes {
        if size == 1 {
            out.push(Complex64::new(t[(i, i)], 0.0));
        } else {
            let (l1, l2) = eig2x2(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            out.push(l1);
            out.push(l2);
        }
        i += size;
    }
    out
}

/// `‖AᵀA − I‖_F`.
pub fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    (q.tr_mul(q) - DMatrix::<f64>::identity(n, n)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_block() {
        let t = DMatrix::from_element(1, 1, 0.5);
        let ev = quasi_eigenvalues(&t, &[1]);
        assert_eq!(ev, vec![Complex64::new(0.5, 0.0)]);
    }

    #[test]
    fn displayed_block_of_the_digraph_solution() {
        let t = DMatrix::from_row_slice(2, 2, &[-0.0856, 0.4259, -0.2613, -0.0856]);
        let ev = quasi_eigenvalues(&t, &[2]);
        assert!((ev[0].re + 0.0856).abs() < 1e-15);
        assert!((ev[0].im - 0.3336).abs() <= 5e-4);
        assert!((ev[1].im + 0.3336).abs() <= 5e-4);
    }

    #[test]
    fn block_detection() {
        let t = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 1.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0],
        );
        assert_eq!(detect_block_sizes(&t), vec![1, 2, 1]);
    }
}
