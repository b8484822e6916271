use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::detect_block_sizes;

/// Default relative deflation tolerance for the QR iteration.
pub const DEFAULT_DEFLATION_TOL: f64 = 1e-14;

/// Real Schur factorization `A = Q T Qᵀ`.
///
/// `T` is upper quasi-triangular. Every 2x2 diagonal block carries a complex
/// conjugate pair and is kept in the standardized form `[[a, b], [c, a]]`
/// with `bc < 0`.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
}

impl SchurForm {
    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    /// Starting row of every diagonal block.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.block_sizes.len());
        let mut at = 0;
        for &s in &self.block_sizes {
            offsets.push(at);
            at += s;
        }
        offsets
    }

    /// `Q T Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.q * &self.t * self.q.transpose()
    }
}

/// Real Schur decomposition by Householder reduction to Hessenberg form
/// followed by Francis double-shift QR.
///
/// A subdiagonal entry is treated as zero when
/// `|t[i+1,i]| <= tol * (|t[i,i]| + |t[i+1,i+1]|)`, or when it falls below
/// `eps * ‖A‖_F`. Each deflated 2x2 block is standardized; one with real
/// eigenvalues is split into two 1x1 blocks.
pub fn real_schur(a: &DMatrix<f64>, tol: f64) -> Result<SchurForm> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "real_schur needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut h = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    if n == 0 {
        return Ok(SchurForm { q, t: h, block_sizes: vec![] });
    }
    hessenberg(&mut h, &mut q);
    francis(&mut h, &mut q, tol, f64::EPSILON * a.norm())?;

    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
    let block_sizes = detect_block_sizes(&h);
    Ok(SchurForm { q, t: h, block_sizes })
}

/// Bring every 2x2 block of `form` into the standard shape `[[a, b], [c, a]]`
/// (`bc < 0`) by an orthogonal similarity applied to `T` and `Q`.
pub fn standardize_blocks(form: &SchurForm) -> Result<SchurForm> {
    let mut out = form.clone();
    let n = out.n();
    for (k, size) in form.block_offsets().into_iter().zip(&form.block_sizes) {
        if *size != 2 {
            continue;
        }
        let std = lanv2(
            out.t[(k, k)],
            out.t[(k, k + 1)],
            out.t[(k + 1, k)],
            out.t[(k + 1, k + 1)],
        );
        if std.c == 0.0 {
            return Err(Error::DegenerateBlock { index: k });
        }
        apply_block_rotation(&mut out.t, &mut out.q, k, n, &std);
    }
    Ok(out)
}

/// Householder reduction to upper Hessenberg form, accumulating into `q`.
fn hessenberg(h: &mut DMatrix<f64>, q: &mut DMatrix<f64>) {
    let n = h.nrows();
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let x: DVector<f64> = h.view((k + 1, k), (m, 1)).column(0).into_owned();
        let tail = x.rows(1, m - 1).norm_squared();
        if tail == 0.0 {
            continue;
        }
        let norm = (x[0] * x[0] + tail).sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let beta = 2.0 / v.norm_squared();

        {
            let mut sub = h.view_mut((k + 1, k), (m, n - k));
            let w = sub.tr_mul(&v);
            sub.ger(-beta, &v, &w, 1.0);
        }
        {
            let mut sub = h.view_mut((0, k + 1), (n, m));
            let w = &sub * &v;
            sub.ger(-beta, &w, &v, 1.0);
        }
        {
            let mut sub = q.view_mut((0, k + 1), (n, m));
            let w = &sub * &v;
            sub.ger(-beta, &w, &v, 1.0);
        }
        h[(k + 1, k)] = alpha;
        for i in (k + 2)..n {
            h[(i, k)] = 0.0;
        }
    }
}

fn negligible(h: &DMatrix<f64>, k: usize, tol: f64, floor: f64) -> bool {
    let sub = h[(k, k - 1)].abs();
    sub <= tol * (h[(k - 1, k - 1)].abs() + h[(k, k)].abs()) || sub <= floor
}

fn francis(h: &mut DMatrix<f64>, q: &mut DMatrix<f64>, tol: f64, floor: f64) -> Result<()> {
    let n = h.nrows();
    let max_its = 30 * n.max(1);
    let mut hi = n;
    let mut its = 0usize;

    while hi > 0 {
        let mut l = hi - 1;
        while l > 0 {
            if negligible(h, l, tol, floor) {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        match hi - l {
            1 => {
                hi -= 1;
                its = 0;
                continue;
            }
            2 => {
                let std = lanv2(h[(l, l)], h[(l, l + 1)], h[(l + 1, l)], h[(l + 1, l + 1)]);
                apply_block_rotation(h, q, l, n, &std);
                hi -= 2;
                its = 0;
                continue;
            }
            _ => {}
        }

        its += 1;
        if its > max_its {
            return Err(Error::SchurFailure { iterations: its - 1 });
        }
        let p = hi - 1;
        let (s, t) = if its % 10 == 0 {
            let w = h[(p, p - 1)].abs() + h[(p - 1, p - 2)].abs();
            (1.5 * w, w * w)
        } else {
            let (a11, a12, a21, a22) = (h[(p - 1, p - 1)], h[(p - 1, p)], h[(p, p - 1)], h[(p, p)]);
            (a11 + a22, a11 * a22 - a12 * a21)
        };
        double_shift_sweep(h, q, l, p, s, t);
    }
    Ok(())
}

/// One implicit double-shift QR sweep on the unreduced window `l..=p`.
fn double_shift_sweep(h: &mut DMatrix<f64>, q: &mut DMatrix<f64>, l: usize, p: usize, s: f64, t: f64) {
    let n = h.nrows();
    let mut x = h[(l, l)] * h[(l, l)] + h[(l, l + 1)] * h[(l + 1, l)] - s * h[(l, l)] + t;
    let mut y = h[(l + 1, l)] * (h[(l, l)] + h[(l + 1, l + 1)] - s);
    let mut z = h[(l + 1, l)] * h[(l + 2, l + 1)];

    for k in l..=(p - 2) {
        if let Some((v, beta)) = householder(&[x, y, z]) {
            let col0 = if k > l { k - 1 } else { l };
            for j in col0..n {
                let dot = v[0] * h[(k, j)] + v[1] * h[(k + 1, j)] + v[2] * h[(k + 2, j)];
                let f = beta * dot;
                h[(k, j)] -= f * v[0];
                h[(k + 1, j)] -= f * v[1];
                h[(k + 2, j)] -= f * v[2];
            }
            let row_end = (k + 3).min(p);
            for i in 0..=row_end {
                let dot = v[0] * h[(i, k)] + v[1] * h[(i, k + 1)] + v[2] * h[(i, k + 2)];
                let f = beta * dot;
                h[(i, k)] -= f * v[0];
                h[(i, k + 1)] -= f * v[1];
                h[(i, k + 2)] -= f * v[2];
            }
            for i in 0..n {
                let dot = v[0] * q[(i, k)] + v[1] * q[(i, k + 1)] + v[2] * q[(i, k + 2)];
                let f = beta * dot;
                q[(i, k)] -= f * v[0];
                q[(i, k + 1)] -= f * v[1];
                q[(i, k + 2)] -= f * v[2];
            }
            if k > l {
                h[(k + 1, k - 1)] = 0.0;
                h[(k + 2, k - 1)] = 0.0;
            }
        }
        x = h[(k + 1, k)];
        y = h[(k + 2, k)];
        if k + 3 <= p {
            z = h[(k + 3, k)];
        }
    }

    let k = p - 1;
    if let Some((v, beta)) = householder(&[x, y]) {
        for j in (k - 1)..n {
            let f = beta * (v[0] * h[(k, j)] + v[1] * h[(k + 1, j)]);
            h[(k, j)] -= f * v[0];
            h[(k + 1, j)] -= f * v[1];
        }
        for i in 0..=p {
            let f = beta * (v[0] * h[(i, k)] + v[1] * h[(i, k + 1)]);
            h[(i, k)] -= f * v[0];
            h[(i, k + 1)] -= f * v[1];
        }
        for i in 0..n {
            let f = beta * (v[0] * q[(i, k)] + v[1] * q[(i, k + 1)]);
            q[(i, k)] -= f * v[0];
            q[(i, k + 1)] -= f * v[1];
        }
        h[(p, p - 2)] = 0.0;
    }
}

/// Householder vector `v` and `beta = 2 / vᵀv` with `(I - beta v vᵀ) x = ∓‖x‖ e₁`.
/// Returns `None` when `x` already has that shape.
fn householder<const N: usize>(x: &[f64; N]) -> Option<([f64; N], f64)> {
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return None;
    }
    let norm = (x[0] * x[0] + tail).sqrt();
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = *x;
    v[0] -= alpha;
    let vv: f64 = v.iter().map(|e| e * e).sum();
    Some((v, 2.0 / vv))
}

/// A 2x2 block in standardized form together with the rotation producing it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Standardized {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub cs: f64,
    pub sn: f64,
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Schur factorization of a real 2x2 matrix:
/// `[[a, b], [c, d]] = G [[aa, bb], [cc, dd]] Gᵀ` with `G = [[cs, -sn], [sn, cs]]`.
/// Either `cc = 0` (real eigenvalues) or `aa = dd` and `bb * cc < 0`.
pub(crate) fn lanv2(a: f64, b: f64, c: f64, d: f64) -> Standardized {
    const MULTPL: f64 = 4.0;
    let eps = f64::EPSILON;
    let (mut a, mut b, mut c, mut d) = (a, b, c, d);
    let (cs, sn);

    if c == 0.0 {
        cs = 1.0;
        sn = 0.0;
    } else if b == 0.0 {
        cs = 0.0;
        sn = 1.0;
        std::mem::swap(&mut a, &mut d);
        b = -c;
        c = 0.0;
    } else if a - d == 0.0 && sign(1.0, b) != sign(1.0, c) {
        cs = 1.0;
        sn = 0.0;
    } else {
        let temp = a - d;
        let mut p = 0.5 * temp;
        let bcmax = b.abs().max(c.abs());
        let bcmis = b.abs().min(c.abs()) * sign(1.0, b) * sign(1.0, c);
        let scale = p.abs().max(bcmax);
        let mut z = p / scale * p + bcmax / scale * bcmis;
        if z >= MULTPL * eps {
            // real eigenvalues
            z = p + sign(scale.sqrt() * z.sqrt(), p);
            a = d + z;
            d -= bcmax / z * bcmis;
            let tau = c.hypot(z);
            cs = z / tau;
            sn = c / tau;
            b -= c;
            c = 0.0;
        } else {
            // complex, or nearly equal real eigenvalues: equalize the diagonal
            let sigma = b + c;
            let tau = sigma.hypot(temp);
            let mut cs0 = (0.5 * (1.0 + sigma.abs() / tau)).sqrt();
            let mut sn0 = -(p / (tau * cs0)) * sign(1.0, sigma);

            let aa = a * cs0 + b * sn0;
            let bb = -a * sn0 + b * cs0;
            let cc = c * cs0 + d * sn0;
            let dd = -c * sn0 + d * cs0;

            a = aa * cs0 + cc * sn0;
            b = bb * cs0 + dd * sn0;
            c = -aa * sn0 + cc * cs0;
            d = -bb * sn0 + dd * cs0;

            let mid = 0.5 * (a + d);
            a = mid;
            d = mid;

            if c != 0.0 {
                if b != 0.0 {
                    if sign(1.0, b) == sign(1.0, c) {
                        // real eigenvalues after all: triangularize
                        let sab = b.abs().sqrt();
                        let sac = c.abs().sqrt();
                        p = sign(sab * sac, c);
                        let tau = 1.0 / (b + c).abs().sqrt();
                        a = mid + p;
                        d = mid - p;
                        b -= c;
                        c = 0.0;
                        let cs1 = sab * tau;
                        let sn1 = sac * tau;
                        let t = cs0 * cs1 - sn0 * sn1;
                        sn0 = cs0 * sn1 + sn0 * cs1;
                        cs0 = t;
                    }
                } else {
                    b = -c;
                    c = 0.0;
                    let t = cs0;
                    cs0 = -sn0;
                    sn0 = t;
                }
            }
            cs = cs0;
            sn = sn0;
        }
    }
    Standardized { a, b, c, d, cs, sn }
}

/// Apply the rotation of `std` as a similarity on rows/columns `k, k+1` of
/// `t` and to columns `k, k+1` of `q`, then write the standardized block.
fn apply_block_rotation(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, k: usize, n: usize, std: &Standardized) {
    let (cs, sn) = (std.cs, std.sn);
    if !(cs == 1.0 && sn == 0.0) {
        for j in (k + 2)..n {
            let (x, y) = (t[(k, j)], t[(k + 1, j)]);
            t[(k, j)] = cs * x + sn * y;
            t[(k + 1, j)] = -sn * x + cs * y;
        }
        for i in 0..k {
            let (x, y) = (t[(i, k)], t[(i, k + 1)]);
            t[(i, k)] = cs * x + sn * y;
            t[(i, k + 1)] = -sn * x + cs * y;
        }
        for i in 0..q.nrows() {
            let (x, y) = (q[(i, k)], q[(i, k + 1)]);
            q[(i, k)] = cs * x + sn * y;
            q[(i, k + 1)] = -sn * x + cs * y;
        }
    }
    t[(k, k)] = std.a;
    t[(k, k + 1)] = std.b;
    t[(k + 1, k)] = std.c;
    t[(k + 1, k + 1)] = std.d;
}
