//! The residual map `F(C, Q, W, V) = C − Q(Λ + 𝒜(W) + W + V)Qᵀ`, its
//! differential, the metric adjoint, the merit gradient and the regularized
//! Gauss-Newton normal operator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifolds::{product_inner, DsProjector, TangentVector};
use crate::spectrum::{Point, StructureData};

/// Entries of `W` on the pair positions at or below this are rejected.
const MIN_PAIR_ENTRY: f64 = 1e-300;

fn pair_entry(sd: &StructureData, w: &DMatrix<f64>, k: usize) -> Result<f64> {
    let (i, j) = sd.i2()[k];
    let v = w[(i, j)];
    if v.is_nan() || v <= MIN_PAIR_ENTRY {
        return Err(Error::ZeroDenominator { row: i, col: j });
    }
    Ok(v)
}

/// `𝒜(W)`: entry `(r+1, r)` is `−b_k² / W[r, r+1]` for the k-th pair at `(r, r+1)`.
pub fn apply_a(sd: &StructureData, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sd.n();
    let mut out = DMatrix::zeros(n, n);
    for (k, (&(i, j), &b)) in sd.i2().iter().zip(sd.b()).enumerate() {
        out[(j, i)] = -b * b / pair_entry(sd, w, k)?;
    }
    Ok(out)
}

/// `B_W`: entry `(r, r+1)` is `b_k² / W[r, r+1]²`.
pub fn b_w(sd: &StructureData, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sd.n();
    let mut out = DMatrix::zeros(n, n);
    for (k, (&(i, j), &b)) in sd.i2().iter().zip(sd.b()).enumerate() {
        let v = pair_entry(sd, w, k)?;
        out[(i, j)] = b * b / (v * v);
    }
    Ok(out)
}

/// `Λ + 𝒜(W) + W + V`.
pub fn inner_matrix(sd: &StructureData, z: &Point) -> Result<DMatrix<f64>> {
    Ok(sd.lambda() + apply_a(sd, &z.w)? + &z.w + &z.v)
}

/// `F(Z)`.
pub fn residual(sd: &StructureData, z: &Point) -> Result<DMatrix<f64>> {
    let t = inner_matrix(sd, z)?;
    Ok(&z.c - &z.q * t * z.q.transpose())
}

/// Everything derived from one point that the linearization needs.
#[derive(Debug, Clone)]
pub struct ResidualContext<'a> {
    sd: &'a StructureData,
    z: Point,
    t: DMatrix<f64>,
    x: DMatrix<f64>,
    f: DMatrix<f64>,
    bw: DMatrix<f64>,
    projector: DsProjector,
}

impl<'a> ResidualContext<'a> {
    pub fn new(sd: &'a StructureData, z: Point) -> Result<Self> {
        let t = inner_matrix(sd, &z)?;
        let x = &z.q * &t * z.q.transpose();
        let f = &z.c - &x;
        let bw = b_w(sd, &z.w)?;
        let projector = DsProjector::new(&z.c);
        Ok(ResidualContext { sd, z, t, x, f, bw, projector })
    }

    pub fn structure(&self) -> &StructureData {
        self.sd
    }

    pub fn point(&self) -> &Point {
        &self.z
    }

    pub fn into_point(self) -> Point {
        self.z
    }

    /// `Λ + 𝒜(W) + W + V`.
    pub fn t_inner(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// `Q T Qᵀ`.
    pub fn conjugated(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn residual(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn residual_norm(&self) -> f64 {
        self.f.norm()
    }

    /// `½‖F‖²`.
    pub fn merit(&self) -> f64 {
        0.5 * self.f.norm_squared()
    }

    /// `DF(Z)[ΔZ]`.
    pub fn differential(&self, dz: &TangentVector) -> DMatrix<f64> {
        let q = &self.z.q;
        let dqqt = &dz.dq * q.transpose();
        let comm = &self.x * &dqqt - &dqqt * &self.x;
        let inner = self.bw.component_mul(&dz.dw).transpose() + &dz.dw + &dz.dv;
        &dz.dc + comm - q * inner * q.transpose()
    }

    /// `DF(Z)*[ΔY]` with respect to the product metric.
    pub fn adjoint(&self, dy: &DMatrix<f64>) -> TangentVector {
        let q = &self.z.q;
        let yhat = q.tr_mul(dy) * q;
        TangentVector {
            dc: self.projector.project(&self.z.c.component_mul(dy)),
            dq: q * self.skew_frame(&yhat),
            dw: -self.z.w.component_mul(&(&yhat + self.bw.component_mul(&yhat.transpose()))),
            dv: -self.sd.s_mask().component_mul(&yhat),
        }
    }

    /// `Qᵀ · ½([X, ΔYᵀ] + [Xᵀ, ΔY]) · Q` from `Ŷ = QᵀΔYQ`; equals
    /// `½((TŶᵀ − ŶTᵀ) − (ŶᵀT − TᵀŶ))`, which is skew.
    fn skew_frame(&self, yhat: &DMatrix<f64>) -> DMatrix<f64> {
        let p1 = &self.t * yhat.transpose();
        let p2 = yhat.tr_mul(&self.t);
        ((&p1 - p1.transpose()) - (&p2 - p2.transpose())) * 0.5
    }

    /// Riemannian gradient of the merit function, `DF(Z)*[F(Z)]`.
    pub fn gradient(&self) -> TangentVector {
        self.adjoint(&self.f)
    }

    /// Riemannian norm of the merit gradient.
    pub fn gradient_norm(&self) -> f64 {
        let g = self.gradient();
        product_inner(self.sd, &self.z, &g, &g).max(0.0).sqrt()
    }

    /// `DF(Z)[DF(Z)*[ΔY]] + σ ΔY`, evaluated in the frame of `Q`.
    pub fn normal_apply(&self, sigma: f64, dy: &DMatrix<f64>) -> DMatrix<f64> {
        let q = &self.z.q;
        let yhat = q.tr_mul(dy) * q;
        let k = self.skew_frame(&yhat);
        let dw = -self.z.w.component_mul(&(&yhat + self.bw.component_mul(&yhat.transpose())));
        let dv = -self.sd.s_mask().component_mul(&yhat);
        let mut frame = &self.t * &k - &k * &self.t;
        frame -= self.bw.component_mul(&dw).transpose() + dw + dv;
        let dc = self.projector.project(&self.z.c.component_mul(dy));
        dc + q * frame * q.transpose() + dy * sigma
    }
}

/// `DF(Z)[ΔZ]` without a cached context.
pub fn differential(sd: &StructureData, z: &Point, dz: &TangentVector) -> Result<DMatrix<f64>> {
    Ok(ResidualContext::new(sd, z.clone())?.differential(dz))
}

/// `DF(Z)*[ΔY]` without a cached context.
pub fn adjoint(sd: &StructureData, z: &Point, dy: &DMatrix<f64>) -> Result<TangentVector> {
    Ok(ResidualContext::new(sd, z.clone())?.adjoint(dy))
}

/// Merit gradient and merit value `½‖F(Z)‖²`.
pub fn gradient(sd: &StructureData, z: &Point) -> Result<(TangentVector, f64)> {
    let ctx = ResidualContext::new(sd, z.clone())?;
    Ok((ctx.gradient(), ctx.merit()))
}

pub fn normal_apply(sd: &StructureData, z: &Point, sigma: f64, dy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(ResidualContext::new(sd, z.clone())?.normal_apply(sigma, dy))
}
