//! Geometry of `DP_n × O(n) × W × V`: Fisher and Frobenius metrics, tangent
//! projections and retractions, factor by factor and on the product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::balance;
use crate::error::{Error, Result};
use crate::linalg::qf;
use crate::spectrum::{Point, StructureData};

/// Relative eigenvalue cutoff for the pseudo-inverse in the `DP_n` projection.
const PINV_CUTOFF: f64 = 1e-12;

/// One factor of the product manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    C,
    Q,
    W,
    V,
}

/// A tangent vector `(ΔC, ΔQ, ΔW, ΔV)` at some point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub dc: DMatrix<f64>,
    pub dq: DMatrix<f64>,
    pub dw: DMatrix<f64>,
    pub dv: DMatrix<f64>,
}

impl TangentVector {
    pub fn zeros(n: usize) -> Self {
        TangentVector {
            dc: DMatrix::zeros(n, n),
            dq: DMatrix::zeros(n, n),
            dw: DMatrix::zeros(n, n),
            dv: DMatrix::zeros(n, n),
        }
    }

    pub fn component(&self, which: Component) -> &DMatrix<f64> {
        match which {
            Component::C => &self.dc,
            Component::Q => &self.dq,
            Component::W => &self.dw,
            Component::V => &self.dv,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        TangentVector {
            dc: &self.dc * a,
            dq: &self.dq * a,
            dw: &self.dw * a,
            dv: &self.dv * a,
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &TangentVector) -> Self {
        TangentVector {
            dc: &self.dc + &other.dc * a,
            dq: &self.dq + &other.dq * a,
            dw: &self.dw + &other.dw * a,
            dv: &self.dv + &other.dv * a,
        }
    }

    /// Frobenius norm of the stacked components (not the Riemannian norm).
    pub fn frobenius_norm(&self) -> f64 {
        (self.dc.norm_squared() + self.dq.norm_squared() + self.dw.norm_squared() + self.dv.norm_squared()).sqrt()
    }

    /// Check the structural conditions of `T_Z` at `base`, with relative tolerance `tol`.
    pub fn check(&self, sd: &StructureData, base: &Point, tol: f64) -> Result<()> {
        let n = sd.n();
        let e = DVector::from_element(n, 1.0);
        let cn = self.dc.norm();
        let dev = (&self.dc * &e).amax().max(self.dc.tr_mul(&e).amax());
        if dev > tol * cn {
            return Err(Error::InvariantViolation(format!("ΔC row/column sums are {dev:e}")));
        }
        let k = base.q.tr_mul(&self.dq);
        let sym = (&k + k.transpose()).norm();
        if sym > tol * self.dq.norm() {
            return Err(Error::InvariantViolation(format!("QᵀΔQ is not skew: {sym:e}")));
        }
        for j in 0..n {
            for i in 0..n {
                if sd.m_mask()[(i, j)] == 0.0 && self.dw[(i, j)] != 0.0 {
                    return Err(Error::InvariantViolation(format!("ΔW[{i},{j}] outside the pair positions")));
                }
                if sd.s_mask()[(i, j)] == 0.0 && self.dv[(i, j)] != 0.0 {
                    return Err(Error::InvariantViolation(format!("ΔV[{i},{j}] must vanish")));
                }
            }
        }
        Ok(())
    }
}

/// Fisher-orthogonal projection onto the tangent space of `DP_n` at `A`.
///
/// The multipliers solve `[[I, A], [Aᵀ, I]] [α; β] = [B𝐞; Bᵀ𝐞]`. Eliminating
/// `β = Bᵀ𝐞 − Aᵀα` leaves the symmetric singular system
/// `(I − AAᵀ) α = B𝐞 − A Bᵀ𝐞`, whose kernel contains `𝐞`; it is solved in the
/// minimum-norm sense through a pseudo-inverse computed once per base point.
#[derive(Debug, Clone)]
pub struct DsProjector {
    a: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl DsProjector {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let g = DMatrix::<f64>::identity(n, n) - a * a.transpose();
        let eig = SymmetricEigen::new(g);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let cutoff = PINV_CUTOFF * lmax;
        let inv = eig.eigenvalues.map(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
        let u = &eig.eigenvectors;
        let pinv = u * DMatrix::from_diagonal(&inv) * u.transpose();
        DsProjector { a: a.clone(), pinv }
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn project(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = b.nrows();
        let row_sums = DVector::from_iterator(n, b.row_iter().map(|r| r.sum()));
        let col_sums = DVector::from_iterator(n, b.column_iter().map(|c| c.sum()));
        let rhs = &row_sums - &self.a * &col_sums;
        let alpha = &self.pinv * rhs;
        let beta = &col_sums - self.a.tr_mul(&alpha);
        DMatrix::from_fn(n, n, |i, j| b[(i, j)] - (alpha[i] + beta[j]) * self.a[(i, j)])
    }
}

/// Project an ambient matrix onto the tangent space of one factor at `base`.
pub fn project_tangent(sd: &StructureData, which: Component, base: &Point, ambient: &DMatrix<f64>) -> DMatrix<f64> {
    match which {
        Component::C => DsProjector::new(&base.c).project(ambient),
        Component::Q => project_orthogonal(&base.q, ambient),
        Component::W => sd.m_mask().component_mul(ambient),
        Component::V => sd.s_mask().component_mul(ambient),
    }
}

/// `Q · skew(QᵀB)`.
pub fn project_orthogonal(q: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = q.tr_mul(b);
    q * ((&k - k.transpose()) * 0.5)
}

/// `P(A ⊙ exp(ξ ⊘ A))`, with `P` the Sinkhorn balancing.
pub fn retract_ds(a: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scaled = a.zip_map(xi, |a, x| a * (x / a).exp());
    if scaled.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::NonFiniteInput);
    }
    Ok(balance::sinkhorn(&scaled, balance::DEFAULT_TOL, balance::DEFAULT_MAX_ITER)?.balanced)
}

/// Entrywise `W ⊙ exp(ξ ⊘ W)` on the pair positions.
pub fn retract_pairs(sd: &StructureData, w: &DMatrix<f64>, xi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(sd.n(), sd.n());
    for &(i, j) in sd.i2() {
        out[(i, j)] = w[(i, j)] * (xi[(i, j)] / w[(i, j)]).exp();
    }
    out
}

/// Retract one factor: returns the new value of that factor.
pub fn retract(sd: &StructureData, which: Component, base: &Point, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match which {
        Component::C => retract_ds(&base.c, xi),
        Component::Q => qf(&(&base.q + xi)),
        Component::W => Ok(retract_pairs(sd, &base.w, xi)),
        Component::V => Ok(&base.v + xi),
    }
}

/// Riemannian metric of one factor at `base`.
pub fn inner(sd: &StructureData, which: Component, base: &Point, xi: &DMatrix<f64>, eta: &DMatrix<f64>) -> f64 {
    match which {
        Component::C => xi
            .iter()
            .zip(eta.iter())
            .zip(base.c.iter())
            .map(|((x, y), a)| x * y / a)
            .sum(),
        Component::W => sd.i2().iter().map(|&(i, j)| xi[(i, j)] * eta[(i, j)] / base.w[(i, j)]).sum(),
        Component::Q | Component::V => xi.dot(eta),
    }
}

/// Componentwise retraction on the product manifold.
pub fn product_retract(sd: &StructureData, base: &Point, dz: &TangentVector) -> Result<Point> {
    Ok(Point {
        c: retract(sd, Component::C, base, &dz.dc)?,
        q: retract(sd, Component::Q, base, &dz.dq)?,
        w: retract(sd, Component::W, base, &dz.dw)?,
        v: retract(sd, Component::V, base, &dz.dv)?,
    })
}

/// Product metric: the sum of the four factor metrics.
pub fn product_inner(sd: &StructureData, base: &Point, a: &TangentVector, b: &TangentVector) -> f64 {
    [Component::C, Component::Q, Component::W, Component::V]
        .iter()
        .map(|&k| inner(sd, k, base, a.component(k), b.component(k)))
        .sum()
}

/// Project every component of an ambient quadruple onto `T_Z`.
pub fn project_product(sd: &StructureData, base: &Point, ambient: &TangentVector) -> TangentVector {
    TangentVector {
        dc: project_tangent(sd, Component::C, base, &ambient.dc),
        dq: project_tangent(sd, Component::Q, base, &ambient.dq),
        dw: project_tangent(sd, Component::W, base, &ambient.dw),
        dv: project_tangent(sd, Component::V, base, &ambient.dv),
    }
}
