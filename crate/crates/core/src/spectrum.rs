//! Spectral data, the fixed structure of a problem instance, iterates on the
//! product manifold, random test problems and starting points.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::balance;
use crate::error::{Error, Result};
use crate::linalg::{self, orthogonality_defect};

/// Tolerance used to match an eigenvalue with its conjugate partner.
pub const PAIR_MATCH_TOL: f64 = 1e-10;
/// Tolerance for recognizing the unit eigenvalue.
pub const UNIT_TOL: f64 = 1e-12;

/// The seedable generator used for every randomized operation.
pub type ProblemRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ProblemRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A complex conjugate pair `re ± im·i`, stored once with `im > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePair {
    pub re: f64,
    pub im: f64,
}

/// A conjugation-closed list of eigenvalues containing 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pairs: Vec<ConjugatePair>,
    reals: Vec<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        2 * self.pairs.len() + self.reals.len()
    }

    /// Number of complex conjugate pairs.
    pub fn s(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[ConjugatePair] {
        &self.pairs
    }

    /// Real eigenvalues, sorted descending.
    pub fn reals(&self) -> &[f64] {
        &self.reals
    }

    /// Flat list: pairs first (`a + bi`, then `a − bi`), then the reals.
    pub fn to_complex(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.n());
        for p in &self.pairs {
            out.push(Complex64::new(p.re, p.im));
            out.push(Complex64::new(p.re, -p.im));
        }
        out.extend(self.reals.iter().map(|&r| Complex64::new(r, 0.0)));
        out
    }
}

/// Validate a raw eigenvalue list and split it into conjugate pairs and reals.
///
/// Values with `|im| <= 1e-10` count as real. Every other value must have a
/// conjugate partner within `1e-10` in both parts; partners are matched
/// greedily by distance, ties going to the lower index.
pub fn parse_spectrum(raw: &[Complex64]) -> Result<Spectrum> {
    if raw.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut reals = Vec::new();
    let mut complex: Vec<(usize, Complex64)> = Vec::new();
    for (i, z) in raw.iter().enumerate() {
        if z.im.abs() <= PAIR_MATCH_TOL {
            reals.push(z.re);
        } else {
            complex.push((i, *z));
        }
    }

    let mut used = vec![false; complex.len()];
    let mut pairs = Vec::new();
    for k in 0..complex.len() {
        if used[k] {
            continue;
        }
        used[k] = true;
        let z = complex[k].1;
        let target = z.conj();
        let mut best: Option<(usize, f64)> = None;
        for m in (k + 1)..complex.len() {
            if used[m] {
                continue;
            }
            let w = complex[m].1;
            if (w.re - target.re).abs() > PAIR_MATCH_TOL || (w.im - target.im).abs() > PAIR_MATCH_TOL {
                continue;
            }
            let d = (w - target).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((m, d));
            }
        }
        let Some((m, _)) = best else {
            return Err(Error::UnpairedComplex { re: z.re, im: z.im });
        };
        used[m] = true;
        let w = complex[m].1;
        pairs.push(ConjugatePair {
            re: 0.5 * (z.re + w.re),
            im: 0.5 * (z.im.abs() + w.im.abs()),
        });
    }

    reals.sort_by(|a, b| b.total_cmp(a));
    if !reals.iter().any(|r| (r - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::MissingUnitEigenvalue);
    }
    if raw.iter().any(|z| z.norm() > 1.0 + PAIR_MATCH_TOL) {
        log::warn!("spectrum has eigenvalues of modulus > 1; it cannot be realized by a doubly stochastic matrix");
    }
    Ok(Spectrum { pairs, reals })
}

/// Placement of the diagonal blocks of `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockOrder {
    /// Complex pairs first (input order), then reals descending.
    #[default]
    PairsFirst,
    /// The unit eigenvalue first, then the complex pairs, then the remaining
    /// reals descending.
    UnitFirst,
}

/// The fixed scaffolding of one problem instance: `Λ`, the pair values `b`,
/// the pair positions, and the masks `S` and `M`.
#[derive(Debug, Clone)]
pub struct StructureData {
    n: usize,
    unit_index: usize,
    lambda: DMatrix<f64>,
    b: Vec<f64>,
    i2: Vec<(usize, usize)>,
    s_mask: DMatrix<f64>,
    m_mask: DMatrix<f64>,
    order: BlockOrder,
}

impl StructureData {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.b.len()
    }

    /// Block diagonal `Λ`: `a_k I₂` per pair and the real eigenvalues.
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Zero-based positions `(r, r+1)` of the pair entries; the k-th entry
    /// belongs to pair k.
    pub fn i2(&self) -> &[(usize, usize)] {
        &self.i2
    }

    /// 1 strictly above the diagonal outside the pair positions, 0 elsewhere.
    pub fn s_mask(&self) -> &DMatrix<f64> {
        &self.s_mask
    }

    /// Indicator of the pair positions.
    pub fn m_mask(&self) -> &DMatrix<f64> {
        &self.m_mask
    }

    /// Diagonal position of the unit eigenvalue in `Λ`.
    pub fn unit_index(&self) -> usize {
        self.unit_index
    }

    pub fn order(&self) -> BlockOrder {
        self.order
    }
}

/// [`build_structure_with_order`] with pairs first.
pub fn build_structure(spec: &Spectrum) -> StructureData {
    build_structure_with_order(spec, BlockOrder::default())
}

pub fn build_structure_with_order(spec: &Spectrum, order: BlockOrder) -> StructureData {
    let n = spec.n();
    // reals are sorted descending; the unit eigenvalue is the one closest to 1
    let unit = spec
        .reals()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut diag = Vec::with_capacity(n);
    let mut i2 = Vec::with_capacity(spec.s());
    let push_pairs = |diag: &mut Vec<f64>, i2: &mut Vec<(usize, usize)>| {
        for p in spec.pairs() {
            i2.push((diag.len(), diag.len() + 1));
            diag.push(p.re);
            diag.push(p.re);
        }
    };
    match order {
        BlockOrder::PairsFirst => {
            push_pairs(&mut diag, &mut i2);
            diag.extend_from_slice(spec.reals());
        }
        BlockOrder::UnitFirst => {
            if let Some(&u) = spec.reals().get(unit) {
                diag.push(u);
            }
            push_pairs(&mut diag, &mut i2);
            diag.extend(
                spec.reals()
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != unit)
                    .map(|(_, &r)| r),
            );
        }
    }

    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    let mut m_mask = DMatrix::zeros(n, n);
    for &(i, j) in &i2 {
        m_mask[(i, j)] = 1.0;
    }
    let s_mask = DMatrix::from_fn(n, n, |i, j| if i < j && m_mask[(i, j)] == 0.0 { 1.0 } else { 0.0 });
    let unit_index = match order {
        BlockOrder::PairsFirst => 2 * spec.s() + unit,
        BlockOrder::UnitFirst => 0,
    };
    StructureData {
        n,
        unit_index,
        lambda,
        b: spec.pairs().iter().map(|p| p.im).collect(),
        i2,
        s_mask,
        m_mask,
        order,
    }
}

/// Dimension of the product manifold: `(n−1)² + n(n−1)/2 + s + n(n−1)/2 − s`.
pub fn manifold_dimension(sd: &StructureData) -> usize {
    let n = sd.n();
    let s = sd.s();
    let tri = n * (n - 1) / 2;
    (n - 1) * (n - 1) + tri + s + (tri - s)
}

/// One iterate `Z = (C, Q, W, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl Point {
    /// Check every membership condition of the four factors.
    pub fn validate(&self, sd: &StructureData) -> Result<()> {
        let n = sd.n();
        for (name, m) in [("C", &self.c), ("Q", &self.q), ("W", &self.w), ("V", &self.v)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvariantViolation(format!("{name} has non-finite entries")));
            }
        }
        if let Some(x) = self.c.iter().find(|&&x| x <= 0.0) {
            return Err(Error::InvariantViolation(format!("C has a non-positive entry {x}")));
        }
        let dev = balance::stochastic_residual(&self.c);
        if dev > 1e-10 {
            return Err(Error::InvariantViolation(format!("C row/column sums deviate from 1 by {dev:e}")));
        }
        let orth = orthogonality_defect(&self.q);
        if orth > 1e-10 {
            return Err(Error::InvariantViolation(format!("‖QᵀQ − I‖_F = {orth:e}")));
        }
        let m = sd.m_mask();
        let s = sd.s_mask();
        for j in 0..n {
            for i in 0..n {
                let w = self.w[(i, j)];
                if m[(i, j)] == 1.0 {
                    if w <= 0.0 {
                        return Err(Error::InvariantViolation(format!("W[{i},{j}] = {w} must be positive")));
                    }
                } else if w != 0.0 {
                    return Err(Error::InvariantViolation(format!("W[{i},{j}] = {w} outside the pair positions")));
                }
                if s[(i, j)] == 0.0 && self.v[(i, j)] != 0.0 {
                    return Err(Error::InvariantViolation(format!("V[{i},{j}] must vanish")));
                }
            }
        }
        Ok(())
    }
}

/// How random positive matrices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemMode {
    /// Entries uniform on (0, 1).
    Dense,
    /// Product of n×p and p×n matrices with entries uniform on (0, 1).
    LowRank { p: usize },
}

fn uniform_matrix(rng: &mut ProblemRng, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major draw order
    let vals: Vec<f64> = (0..rows * cols).map(|_| Open01.sample(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &vals)
}

fn random_positive(n: usize, mode: ProblemMode, rng: &mut ProblemRng) -> Result<DMatrix<f64>> {
    match mode {
        ProblemMode::Dense => Ok(uniform_matrix(rng, n, n)),
        ProblemMode::LowRank { p } => {
            if p == 0 || p >= n {
                return Err(Error::InvalidArgument(format!("low-rank mode needs 1 <= p < n, got p = {p}, n = {n}")));
            }
            let c1 = uniform_matrix(rng, n, p);
            let c2 = uniform_matrix(rng, p, n);
            Ok(c1 * c2)
        }
    }
}

/// Eigenvalues whose modulus falls below this are snapped to zero when a
/// test spectrum is read off a balanced random matrix.
const ZERO_SNAP: f64 = 1e-10;

/// Draw a random positive matrix, balance it, and return its spectrum
/// together with the balanced matrix (a known realization, for checks only).
///
/// The eigenvalue closest to 1 is set to exactly 1 and eigenvalues of modulus
/// below `1e-10` to exactly 0.
pub fn random_problem(n: usize, mode: ProblemMode, seed: u64) -> Result<(Spectrum, DMatrix<f64>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("random problems need n >= 2, got {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let raw = random_positive(n, mode, &mut rng)?;
    let target = balance::balance(&raw)?;
    let schur = linalg::real_schur(&target, linalg::DEFAULT_DEFLATION_TOL)?;
    let mut eig = linalg::quasi_eigenvalues(&schur.t, &schur.block_sizes);

    let unit = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, _)| i)
        .expect("n >= 2");
    eig[unit] = Complex64::new(1.0, 0.0);
    for z in eig.iter_mut() {
        if z.norm() < ZERO_SNAP {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    Ok((parse_spectrum(&eig)?, target))
}

/// Starting point: `C₀` balanced from a random positive matrix, `(Q₀, T₀)` a
/// standardized real Schur form of `C₀`, `V₀ = S ⊙ T₀`, and `W₀` holding `|b_k|`
/// at the k-th pair position.
///
/// `e/√n` is a left and right eigenvector of `C₀`, so `Q₀` is built as `e/√n`
/// placed at the unit position of `Λ` together with the Schur vectors of `C₀` restricted to `e⊥`.
pub fn initial_point(sd: &StructureData, mode: ProblemMode, seed: u64) -> Result<Point> {
    let n = sd.n();
    if n == 1 {
        let one = DMatrix::from_element(1, 1, 1.0);
        return Ok(Point { c: one.clone(), q: one, w: DMatrix::zeros(1, 1), v: DMatrix::zeros(1, 1) });
    }
    let mut rng = rng_from_seed(seed);
    let c = balance::balance(&random_positive(n, mode, &mut rng)?)?;
    let q = unit_aligned_schur_vectors(&c, sd.unit_index())?;
    let t = q.transpose() * &c * &q;
    let v = sd.s_mask().component_mul(&t);
    let mut w = DMatrix::zeros(n, n);
    for (&(i, j), &b) in sd.i2().iter().zip(sd.b()) {
        w[(i, j)] = b.abs();
    }
    Ok(Point { c, q, w, v })
}

/// Orthogonal `Q` with `e/√n` as column `unit` such that `QᵀCQ` is quasi upper triangular, for a doubly
/// stochastic `C`.
fn unit_aligned_schur_vectors(c: &DMatrix<f64>, unit: usize) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    let e = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    // Householder reflector swapping e/√n and e₁; its other columns span e⊥
    let mut v = e.clone();
    v[0] -= 1.0;
    let h = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
    let u = h.columns(1, n - 1).into_owned();
    let inner = u.transpose() * c * &u;
    let schur = linalg::standardize_blocks(&linalg::real_schur(&inner, linalg::DEFAULT_DEFLATION_TOL)?)?;
    let rest = u * &schur.q;
    let split = unit.min(n - 1);
    let mut q = DMatrix::zeros(n, n);
    q.columns_mut(0, split).copy_from(&rest.columns(0, split));
    q.set_column(split, &e);
    q.columns_mut(split + 1, n - 1 - split).copy_from(&rest.columns(split, n - 1 - split));
    Ok(q)
}
