//! Bartels-Stewart solver for `A Z − Z B = −C` with `A`, `B` upper
//! quasi-triangular.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::detect_block_sizes;

/// Smallest admissible pivot in the per-block solves.
const MIN_DIVISOR: f64 = 1e-13;

/// Solve `A Z − Z B = −C` for `Z` (`A` is p×p, `B` is q×q, both upper
/// quasi-triangular with 1x1/2x2 diagonal blocks; `C` is p×q).
pub fn sylvester_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let q = b.nrows();
    if a.ncols() != p || b.ncols() != q || c.nrows() != p || c.ncols() != q {
        return Err(Error::DimensionMismatch(format!(
            "sylvester: A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let a_blocks = offsets(&detect_block_sizes(a));
    let b_blocks = offsets(&detect_block_sizes(b));
    let mut z = DMatrix::<f64>::zeros(p, q);

    for &(j0, nj) in &b_blocks {
        for &(i0, ni) in a_blocks.iter().rev() {
            // rhs = −C_ij + Σ_{k<j} Z_ik B_kj − Σ_{l>i} A_il Z_lj
            let mut rhs = [[0.0f64; 2]; 2];
            for (di, row) in rhs.iter_mut().enumerate().take(ni) {
                for (dj, cell) in row.iter_mut().enumerate().take(nj) {
                    let (i, j) = (i0 + di, j0 + dj);
                    let mut v = -c[(i, j)];
                    for k in 0..j0 {
                        v += z[(i, k)] * b[(k, j)];
                    }
                    for l in (i0 + ni)..p {
                        v -= a[(i, l)] * z[(l, j)];
                    }
                    *cell = v;
                }
            }
            let sol = solve_block(a, i0, ni, b, j0, nj, &rhs)?;
            for di in 0..ni {
                for dj in 0..nj {
                    z[(i0 + di, j0 + dj)] = sol[di][dj];
                }
            }
        }
    }
    Ok(z)
}

fn offsets(sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut at = 0;
    sizes
        .iter()
        .map(|&s| {
            let o = (at, s);
            at += s;
            o
        })
        .collect()
}

/// Solve `A_ii X − X B_jj = R` for a block of size at most 2x2 through its
/// Kronecker form, with complete pivoting.
fn solve_block(
    a: &DMatrix<f64>,
    i0: usize,
    ni: usize,
    b: &DMatrix<f64>,
    j0: usize,
    nj: usize,
    rhs: &[[f64; 2]; 2],
) -> Result<[[f64; 2]; 2]> {
    let dim = ni * nj;
    // unknown index u = di + ni * dj (column-major vec of X)
    let mut m = [[0.0f64; 4]; 4];
    let mut r = [0.0f64; 4];
    for dj in 0..nj {
        for di in 0..ni {
            let row = di + ni * dj;
            r[row] = rhs[di][dj];
            // (A X)_{di,dj} = Σ_k A[di,k] X[k,dj]
            for k in 0..ni {
                m[row][k + ni * dj] += a[(i0 + di, i0 + k)];
            }
            // (X B)_{di,dj} = Σ_k X[di,k] B[k,dj]
            for k in 0..nj {
                m[row][di + ni * k] -= b[(j0 + k, j0 + dj)];
            }
        }
    }
    let x = gauss_complete(&mut m, &mut r, dim)?;
    let mut out = [[0.0f64; 2]; 2];
    for dj in 0..nj {
        for di in 0..ni {
            out[di][dj] = x[di + ni * dj];
        }
    }
    Ok(out)
}

fn gauss_complete(m: &mut [[f64; 4]; 4], r: &mut [f64; 4], dim: usize) -> Result<[f64; 4]> {
    let mut col_perm = [0usize, 1, 2, 3];
    for k in 0..dim {
        let (mut pi, mut pj, mut best) = (k, k, -1.0);
        for i in k..dim {
            for j in k..dim {
                if m[i][j].abs() > best {
                    best = m[i][j].abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        if best < MIN_DIVISOR {
            return Err(Error::SpectraOverlap { divisor: best });
        }
        m.swap(k, pi);
        r.swap(k, pi);
        if pj != k {
            for row in m.iter_mut() {
                row.swap(k, pj);
            }
            col_perm.swap(k, pj);
        }
        for i in (k + 1)..dim {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..dim {
                    m[i][j] -= f * m[k][j];
                }
                r[i] -= f * r[k];
            }
        }
    }
    let mut y = [0.0f64; 4];
    for k in (0..dim).rev() {
        let mut v = r[k];
        for j in (k + 1)..dim {
            v -= m[k][j] * y[j];
        }
        y[k] = v / m[k][k];
    }
    let mut x = [0.0f64; 4];
    for k in 0..dim {
        x[col_perm[k]] = y[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real_schur, standardize_blocks};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
        (a * z - z * b + c).norm()
    }

    #[test]
    fn scalar_case() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let c = DMatrix::from_element(1, 1, 2.0);
        let z = sylvester_solve(&a, &b, &c).unwrap();
        assert_eq!(z[(0, 0)], -2.0);
    }

    #[test]
    fn equal_spectra_are_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -0.3]);
        let c = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(sylvester_solve(&a, &a, &c), Err(Error::SpectraOverlap { .. })));
    }

    #[test]
    fn random_quasi_triangular_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let ga = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let gb = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)) * 0.1
                + DMatrix::identity(2, 2) * 3.0;
            let fa = standardize_blocks(&real_schur(&ga, 1e-14).unwrap()).unwrap();
            let fb = standardize_blocks(&real_schur(&gb, 1e-14).unwrap()).unwrap();
            let c = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
            let z = sylvester_solve(&fa.t, &fb.t, &c).unwrap();
            let bound = 1e-10 * (fa.t.norm() + fb.t.norm()) * z.norm() + 1e-12 * c.norm();
            assert!(residual(&fa.t, &fb.t, &c, &z) <= bound);
        }
    }

    #[test]
    fn two_by_two_blocks_on_both_sides() {
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 2.0, 0.3, 0.1, //
            -0.5, 1.0, 0.2, 0.4, //
            0.0, 0.0, -2.0, 0.7, //
            0.0, 0.0, 0.0, 0.25,
        ]);
        let b = DMatrix::from_row_slice(3, 3, &[
            0.0, 1.5, 0.2, //
            -1.0, 0.0, 0.3, //
            0.0, 0.0, 4.0,
        ]);
        let c = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let z = sylvester_solve(&a, &b, &c).unwrap();
        assert!(residual(&a, &b, &c, &z) < 1e-12);
    }
}
