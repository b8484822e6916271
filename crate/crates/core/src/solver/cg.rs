use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::ResidualContext;

/// Curvature denominators below this magnitude abort the iteration.
const MIN_CURVATURE: f64 = 1e-300;

/// Result of a CG run on the regularized normal equations.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub dy: DMatrix<f64>,
    /// Final residual `rhs − (DF∘DF* + σI)[ΔY]`.
    pub residual: DMatrix<f64>,
    /// `‖residual‖ / ‖rhs‖`.
    pub rel_residual: f64,
    pub iterations: usize,
    /// Whether the stopping test accepted the final iterate.
    pub accepted: bool,
}

/// Solve `(DF∘DF* + σI)[ΔY] = rhs` by CG from `ΔY = 0`, stopping once
/// `‖r‖ ≤ rel_tol·‖rhs‖` or after `max_iter` iterations.
pub fn cg_normal_solve(
    ctx: &ResidualContext<'_>,
    sigma: f64,
    rhs: &DMatrix<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let bound = rel_tol * rhs.norm();
    cg_normal_solve_until(ctx, sigma, rhs, max_iter, |_, r| r.norm() <= bound)
}

/// CG with a caller-supplied stopping test `accept(ΔY, r)`, evaluated after
/// every iteration.
pub fn cg_normal_solve_until(
    ctx: &ResidualContext<'_>,
    sigma: f64,
    rhs: &DMatrix<f64>,
    max_iter: usize,
    mut accept: impl FnMut(&DMatrix<f64>, &DMatrix<f64>) -> bool,
) -> Result<CgOutcome> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("CG needs sigma > 0, got {sigma}")));
    }
    let rhs_norm = rhs.norm();
    let (n, m) = rhs.shape();
    let mut x = DMatrix::<f64>::zeros(n, m);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut iterations = 0;
    let mut accepted = false;

    while iterations < max_iter && rr > 0.0 {
        let ap = ctx.normal_apply(sigma, &p);
        let curvature = p.dot(&ap);
        if !(curvature.abs() >= MIN_CURVATURE) {
            return Err(Error::CgBreakdown { curvature });
        }
        let alpha = rr / curvature;
        x += &p * alpha;
        r -= &ap * alpha;
        iterations += 1;
        if accept(&x, &r) {
            accepted = true;
            break;
        }
        let rr_new = r.norm_squared();
        p *= rr_new / rr;
        p += &r;
        rr = rr_new;
    }
    let rel_residual = if rhs_norm > 0.0 { r.norm() / rhs_norm } else { 0.0 };
    Ok(CgOutcome { dy: x, residual: r, rel_residual, iterations, accepted })
}
