//! Invariant subspaces from a real Schur form: group the diagonal blocks
//! into eigenvalue clusters, then block-diagonalize `T` with Sylvester
//! solves, accumulating the transformation into `Θ = QY`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    detect_block_sizes, qf, quasi_eigenvalues, real_schur, standardize_blocks, sylvester_solve, SchurForm,
    DEFAULT_DEFLATION_TOL,
};
use crate::operator::inner_matrix;
use crate::spectrum::{Point, StructureData};

/// Default distance below which two eigenvalues share a cluster.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;

/// Admissible `‖QTQᵀ − C‖_F / ‖C‖_F` for [`invariant_subspaces`].
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Contiguous grouping of the Schur diagonal into clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    pub sizes: Vec<usize>,
    /// Eigenvalues of each partition block.
    pub eigenvalues: Vec<Vec<Complex64>>,
}

impl BlockPartition {
    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.sizes
            .iter()
            .map(|&s| {
                let o = at;
                at += s;
                o
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Cluster the Schur blocks of `form` so that eigenvalues within
/// `cluster_tol` of each other (transitively) share a partition block.
///
/// Fails with [`Error::InterleavedCluster`] when a cluster is split by
/// another one in the Schur order; reordering the form is not attempted.
pub fn partition_blocks(form: &SchurForm, cluster_tol: f64) -> Result<BlockPartition> {
    if !(cluster_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("cluster tolerance must be non-negative, got {cluster_tol}")));
    }
    let eig = quasi_eigenvalues(&form.t, &form.block_sizes);
    let mut block_eigs: Vec<&[Complex64]> = Vec::with_capacity(form.block_sizes.len());
    let mut at = 0;
    for &s in &form.block_sizes {
        block_eigs.push(&eig[at..at + s]);
        at += s;
    }

    let nb = block_eigs.len();
    let mut parent: Vec<usize> = (0..nb).collect();
    for a in 0..nb {
        for b in (a + 1)..nb {
            let close = block_eigs[a]
                .iter()
                .any(|x| block_eigs[b].iter().any(|y| (x - y).norm() <= cluster_tol));
            if close {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    let mut sizes = Vec::new();
    let mut eigenvalues: Vec<Vec<Complex64>> = Vec::new();
    let mut seen = Vec::new();
    let mut current = usize::MAX;
    for b in 0..nb {
        let root = find(&mut parent, b);
        if root != current {
            if seen.contains(&root) {
                return Err(Error::InterleavedCluster { block: b });
            }
            seen.push(root);
            current = root;
            sizes.push(0);
            eigenvalues.push(Vec::new());
        }
        *sizes.last_mut().expect("pushed above") += form.block_sizes[b];
        eigenvalues.last_mut().expect("pushed above").extend_from_slice(block_eigs[b]);
    }
    Ok(BlockPartition { sizes, eigenvalues })
}

#[derive(Debug, Clone)]
pub struct SubspaceResult {
    /// Column blocks `Θ_1 … Θ_q`, laid out by `partition`.
    pub theta: DMatrix<f64>,
    /// Diagonal blocks `T_ii` of the block-diagonalized Schur factor.
    pub blocks: Vec<DMatrix<f64>>,
    pub partition: BlockPartition,
}

impl SubspaceResult {
    /// Columns of the i-th invariant subspace basis.
    pub fn theta_block(&self, i: usize) -> DMatrix<f64> {
        let off = self.partition.offsets()[i];
        self.theta.columns(off, self.partition.sizes[i]).into_owned()
    }

    /// `‖CΘ_i − Θ_i T_ii‖_F` for every block.
    pub fn residuals(&self, c: &DMatrix<f64>) -> Vec<f64> {
        (0..self.partition.len())
            .map(|i| {
                let th = self.theta_block(i);
                (c * &th - &th * &self.blocks[i]).norm()
            })
            .collect()
    }
}

/// Block-diagonalize the Schur factor of `c` over `part` and return bases
/// of the invariant subspaces, `CΘ_i = Θ_i T_ii`.
///
/// Each block of `Θ` is signed so that the largest-magnitude entry of its
/// first column is positive.
pub fn invariant_subspaces(c: &DMatrix<f64>, form: &SchurForm, part: &BlockPartition) -> Result<SubspaceResult> {
    invariant_subspaces_with_tol(c, form, part, RECONSTRUCTION_TOL)
}

/// [`invariant_subspaces`] with a caller-chosen bound on
/// `‖QTQᵀ − C‖_F / ‖C‖_F`.
pub fn invariant_subspaces_with_tol(
    c: &DMatrix<f64>,
    form: &SchurForm,
    part: &BlockPartition,
    reconstruction_tol: f64,
) -> Result<SubspaceResult> {
    let n = form.n();
    if c.nrows() != n || c.ncols() != n || part.sizes.iter().sum::<usize>() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}x{}, Schur form of order {n}, partition of {}",
            c.nrows(),
            c.ncols(),
            part.sizes.iter().sum::<usize>()
        )));
    }
    let mismatch = (form.reconstruct() - c).norm();
    if !(mismatch <= reconstruction_tol * c.norm()) {
        return Err(Error::ReconstructionMismatch { mismatch });
    }

    let off = part.offsets();
    let sz = &part.sizes;
    let q = sz.len();
    let mut t = form.t.clone();
    let mut theta = form.q.clone();

    for j in 1..q {
        for i in 0..j {
            let tii = t.view((off[i], off[i]), (sz[i], sz[i])).into_owned();
            let tjj = t.view((off[j], off[j]), (sz[j], sz[j])).into_owned();
            let tij = t.view((off[i], off[j]), (sz[i], sz[j])).into_owned();
            let z = sylvester_solve(&tii, &tjj, &tij)?;
            for k in (j + 1)..q {
                let tjk = t.view((off[j], off[k]), (sz[j], sz[k])).into_owned();
                let mut tik = t.view_mut((off[i], off[k]), (sz[i], sz[k]));
                tik -= &z * tjk;
            }
            t.view_mut((off[i], off[j]), (sz[i], sz[j])).fill(0.0);
            let update = theta.columns(off[i], sz[i]) * &z;
            let mut th_j = theta.columns_mut(off[j], sz[j]);
            th_j += update;
        }
    }

    for i in 0..q {
        let mut block = theta.columns_mut(off[i], sz[i]);
        let lead = block.column(0).iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            block.neg_mut();
        }
    }
    let blocks = (0..q).map(|i| t.view((off[i], off[i]), (sz[i], sz[i])).into_owned()).collect();
    Ok(SubspaceResult { theta, blocks, partition: part.clone() })
}

/// Real Schur form `(Q, Λ + 𝒜(W) + W + V)` carried by a solver iterate.
pub fn schur_form_from_point(sd: &StructureData, z: &Point) -> Result<SchurForm> {
    let t = inner_matrix(sd, z)?;
    let block_sizes = detect_block_sizes(&t);
    Ok(SchurForm { q: z.q.clone(), t, block_sizes })
}

/// Sweeps allowed in [`refine_block_schur`].
pub const MAX_REFINE_SWEEPS: usize = 8;

/// Turn an approximate Schur form of `c` into an exact one, block upper
/// triangular with respect to `part`.
///
/// For `C = Q(T + E)Qᵀ` with small `E`, the invariant subspace of each
/// leading group of clusters is corrected by solving `D X − X A = −E₂₁`
/// against the diagonal blocks of the original `T` and rotating onto
/// `[I; X]`. Clusters only need to be separated from each other, so
/// eigenvalues that `E` spreads inside a cluster are harmless. Each diagonal
/// block is finally brought to standardized real Schur form.
pub fn refine_block_schur(c: &DMatrix<f64>, form: &SchurForm, part: &BlockPartition) -> Result<SchurForm> {
    let n = form.n();
    if c.nrows() != n || c.ncols() != n || part.sizes.iter().sum::<usize>() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}x{}, Schur form of order {n}, partition of {}",
            c.nrows(),
            c.ncols(),
            part.sizes.iter().sum::<usize>()
        )));
    }
    let off = part.offsets();
    let tol = 4.0 * f64::EPSILON * (n as f64) * c.norm().max(f64::MIN_POSITIVE);
    let mut q = form.q.clone();
    let mut t = q.transpose() * c * &q;
    let lower = |t: &DMatrix<f64>, b: usize| t.view((b, 0), (n - b, b)).norm();

    let mut converged = false;
    for _ in 0..MAX_REFINE_SWEEPS {
        if off[1..].iter().all(|&b| lower(&t, b) <= tol) {
            converged = true;
            break;
        }
        for &b in &off[1..] {
            let a = form.t.view((0, 0), (b, b)).into_owned();
            let d = form.t.view((b, b), (n - b, n - b)).into_owned();
            let e = t.view((b, 0), (n - b, b)).into_owned();
            let x = sylvester_solve(&d, &a, &e)?;
            let mut m = DMatrix::identity(n, n);
            m.view_mut((b, 0), (n - b, b)).copy_from(&x);
            m.view_mut((0, b), (b, n - b)).copy_from(&(-x.transpose()));
            let u = qf(&m)?;
            t = u.transpose() * &t * &u;
            q *= &u;
        }
    }
    if !converged && off[1..].iter().any(|&b| lower(&t, b) > tol) {
        return Err(Error::NotConverged { max_iter: MAX_REFINE_SWEEPS });
    }
    for &b in &off[1..] {
        t.view_mut((b, 0), (n - b, b)).fill(0.0);
    }

    let mut block_sizes = Vec::new();
    let mut u = DMatrix::zeros(n, n);
    let mut diag = Vec::with_capacity(part.len());
    for (&o, &s) in off.iter().zip(&part.sizes) {
        let block = t.view((o, o), (s, s)).into_owned();
        let bs = standardize_blocks(&real_schur(&block, DEFAULT_DEFLATION_TOL)?)?;
        u.view_mut((o, o), (s, s)).copy_from(&bs.q);
        block_sizes.extend_from_slice(&bs.block_sizes);
        diag.push(bs.t);
    }
    let mut t = u.transpose() * &t * &u;
    for &b in &off[1..] {
        t.view_mut((b, 0), (n - b, b)).fill(0.0);
    }
    // exact quasi-triangular diagonal blocks, free of rounding below them
    for ((&o, &s), d) in off.iter().zip(&part.sizes).zip(diag) {
        t.view_mut((o, o), (s, s)).copy_from(&d);
    }
    Ok(SchurForm { q: q * u, t, block_sizes })
}

/// Invariant subspaces of a computed solution `z.c`.
///
/// The partition is read off the Schur factor carried by `z`, whose
/// eigenvalues are exactly the prescribed ones; the factors are then refined
/// to an exact block Schur form of `z.c` before block-diagonalizing.
pub fn solution_subspaces(sd: &StructureData, z: &Point, cluster_tol: f64) -> Result<SubspaceResult> {
    let form = schur_form_from_point(sd, z)?;
    let part = partition_blocks(&form, cluster_tol)?;
    let refined = refine_block_schur(&z.c, &form, &part)?;
    invariant_subspaces(&z.c, &refined, &part)
}
