//! Riemannian inexact Newton-CG drivers: a monotone variant with a
//! backtracking sufficient-decrease search and a nonmonotone variant whose
//! line search tolerates a summable amount of residual growth.

mod cg;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{product_inner, product_retract, TangentVector};
use crate::operator::{residual, ResidualContext};
use crate::spectrum::{Point, StructureData};

pub use cg::{cg_normal_solve, cg_normal_solve_until, CgOutcome};

/// Which outer iteration to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Monotone,
    Nonmonotone,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Monotone => "monotone",
            Algorithm::Nonmonotone => "nonmonotone",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monotone" => Ok(Algorithm::Monotone),
            "nonmonotone" => Ok(Algorithm::Nonmonotone),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Tuning constants of both drivers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverParams {
    /// Stop once `‖F‖_F < epsilon`.
    pub epsilon: f64,
    /// Cap on the Tikhonov shift `σ_k = min(sigma_max, ‖F_k‖)`.
    pub sigma_max: f64,
    /// Cap on the forcing term of the monotone driver.
    pub eta_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Backtracking factor of the monotone driver, within `[theta_min, theta_max]`.
    pub theta: f64,
    /// Sufficient-decrease constant of the monotone driver.
    pub t: f64,
    /// Full-step acceptance ratio of the nonmonotone driver.
    pub tau: f64,
    /// Backtracking factor of the nonmonotone driver.
    pub rho: f64,
    pub delta: f64,
    /// CG iteration cap; `None` means `n²`.
    pub cg_max_iter: Option<usize>,
    pub outer_max_iter: usize,
    pub linesearch_max: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 5e-8,
            sigma_max: 1e-6,
            eta_max: 0.1,
            theta_min: 0.1,
            theta_max: 0.9,
            theta: 0.5,
            t: 1e-4,
            tau: 0.9,
            rho: 0.5,
            delta: 1e-4,
            cg_max_iter: None,
            outer_max_iter: 200,
            linesearch_max: 60,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let open01 = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        open01("sigma_max", self.sigma_max)?;
        open01("eta_max", self.eta_max)?;
        open01("t", self.t)?;
        open01("tau", self.tau)?;
        open01("rho", self.rho)?;
        open01("theta_min", self.theta_min)?;
        open01("theta_max", self.theta_max)?;
        if self.theta_min >= self.theta_max || self.theta < self.theta_min || self.theta > self.theta_max {
            return Err(Error::InvalidArgument(format!(
                "need theta_min < theta_max and theta in between, got {} / {} / {}",
                self.theta_min, self.theta_max, self.theta
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1/2), got {}", self.delta)));
        }
        if self.cg_max_iter == Some(0) {
            return Err(Error::InvalidArgument("cg_max_iter must be positive".into()));
        }
        Ok(())
    }

    fn cg_cap(&self, n: usize) -> usize {
        self.cg_max_iter.unwrap_or((n * n).max(1))
    }
}

/// Forcing term `η_k = 1/(k+2)` of the nonmonotone driver.
pub fn eta_k(k: usize) -> f64 {
    1.0 / (k as f64 + 2.0)
}

/// Nonmonotonicity allowance `γ_k = 1/(k+2)²`.
pub fn gamma_k(k: usize) -> f64 {
    eta_k(k) * eta_k(k)
}

/// `Σ_k γ_k = π²/6 − 1`.
pub fn gamma_sum() -> f64 {
    std::f64::consts::PI.powi(2) / 6.0 - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// CG reached its cap without making `‖DF∘DF*[ΔY] + F‖ < ‖F‖` hold.
    Tol2Unreachable,
}

/// One accepted outer step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖F‖_F` after the step.
    pub residual: f64,
    pub step_length: f64,
    pub cg_iterations: usize,
    /// Forcing term in effect when the step was accepted.
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub algorithm: Algorithm,
    pub status: Status,
    pub outer_iterations: usize,
    /// Evaluations of `F`, the one at the starting point included.
    pub function_evaluations: usize,
    pub cg_iterations_total: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub final_gradient_norm: f64,
    /// Seconds.
    pub wall_time: f64,
    pub trace: Vec<IterationRecord>,
}

impl SolverReport {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// `‖F_0‖, ‖F_1‖, …` over all accepted iterates.
    pub fn residual_history(&self) -> Vec<f64> {
        std::iter::once(self.initial_residual).chain(self.trace.iter().map(|r| r.residual)).collect()
    }
}

/// Run the chosen driver.
pub fn solve(sd: &StructureData, z0: Point, params: &SolverParams, algorithm: Algorithm) -> Result<(Point, SolverReport)> {
    match algorithm {
        Algorithm::Monotone => solve_monotone(sd, z0, params),
        Algorithm::Nonmonotone => solve_nonmonotone(sd, z0, params),
    }
}

/// Evaluate `F` at `R_Z(α ΔZ)`. Failed retractions (singular `Q + ξ`,
/// overflowing or unbalanceable `C`) and degenerate `W` come back as `None`
/// so the caller can shrink the step.
fn trial(sd: &StructureData, z: &Point, dz: &TangentVector, alpha: f64, nf: &mut usize) -> Option<(Point, f64)> {
    let p = match product_retract(sd, z, &dz.scaled(alpha)) {
        Ok(p) => p,
        Err(e) => {
            log::debug!("retraction failed at step {alpha:e}: {e}");
            return None;
        }
    };
    *nf += 1;
    match residual(sd, &p) {
        Ok(f) => {
            let norm = f.norm();
            norm.is_finite().then_some((p, norm))
        }
        Err(e) => {
            log::debug!("residual failed at step {alpha:e}: {e}");
            None
        }
    }
}

struct Run<'a> {
    sd: &'a StructureData,
    algorithm: Algorithm,
    start: Instant,
    nf: usize,
    ncg: usize,
    initial_residual: f64,
    trace: Vec<IterationRecord>,
}

impl<'a> Run<'a> {
    fn new(sd: &'a StructureData, algorithm: Algorithm, ctx: &ResidualContext<'_>) -> Self {
        Run {
            sd,
            algorithm,
            start: Instant::now(),
            nf: 1,
            ncg: 0,
            initial_residual: ctx.residual_norm(),
            trace: Vec::new(),
        }
    }

    fn finish(self, ctx: ResidualContext<'_>, status: Status) -> (Point, SolverReport) {
        let report = SolverReport {
            algorithm: self.algorithm,
            status,
            outer_iterations: self.trace.len(),
            function_evaluations: self.nf,
            cg_iterations_total: self.ncg,
            initial_residual: self.initial_residual,
            final_residual: ctx.residual_norm(),
            final_gradient_norm: ctx.gradient_norm(),
            wall_time: self.start.elapsed().as_secs_f64(),
            trace: self.trace,
        };
        log::info!(
            "{}: {:?} after {} iterations, ‖F‖ = {:.3e}",
            self.algorithm.tag(),
            status,
            report.outer_iterations,
            report.final_residual
        );
        (ctx.into_point(), report)
    }

    fn accept(&mut self, point: Point, record: IterationRecord) -> Result<ResidualContext<'a>> {
        debug_assert!(point.validate(self.sd).is_ok(), "iterate left the manifold: {:?}", point.validate(self.sd));
        log::debug!(
            "iteration {}: ‖F‖ = {:.3e}, step {:.3e}, {} CG iterations",
            record.iteration,
            record.residual,
            record.step_length,
            record.cg_iterations
        );
        self.trace.push(record);
        ResidualContext::new(self.sd, point)
    }
}

/// Monotone Riemannian inexact Newton-CG.
///
/// Each CG solve must reach `‖r‖ ≤ η̄_k‖F_k‖` and `‖DF∘DF*[ΔY] + F_k‖ < ‖F_k‖`.
/// If CG hits its cap while the second test fails, the run stops with
/// [`Status::Tol2Unreachable`]; if only the first test fails, the last CG
/// iterate is used.
pub fn solve_monotone(sd: &StructureData, z0: Point, params: &SolverParams) -> Result<(Point, SolverReport)> {
    params.validate()?;
    z0.validate(sd)?;
    let mut ctx = ResidualContext::new(sd, z0)?;
    let mut run = Run::new(sd, Algorithm::Monotone, &ctx);
    let cap = params.cg_cap(sd.n());

    for k in 0.. {
        let fnorm = ctx.residual_norm();
        if fnorm < params.epsilon {
            return Ok(run.finish(ctx, Status::Converged));
        }
        if k >= params.outer_max_iter {
            return Ok(run.finish(ctx, Status::MaxIterations));
        }
        let sigma = params.sigma_max.min(fnorm);
        let eta_bar = params.eta_max.min(fnorm);
        let rhs = -ctx.residual();
        let tol1 = eta_bar * fnorm;
        let decrease = |x: &nalgebra::DMatrix<f64>, r: &nalgebra::DMatrix<f64>| -> f64 {
            // DF∘DF*[x] + F = −r − σx
            (r + x * sigma).norm()
        };
        let out = cg_normal_solve_until(&ctx, sigma, &rhs, cap, |x, r| r.norm() <= tol1 && decrease(x, r) < fnorm)?;
        run.ncg += out.iterations;
        let lin = decrease(&out.dy, &out.residual);
        if !out.accepted {
            if lin >= fnorm {
                log::warn!("CG cap {cap} reached without a decrease direction");
                return Ok(run.finish(ctx, Status::Tol2Unreachable));
            }
            log::debug!("CG cap {cap} reached with relative residual {:.3e}", out.rel_residual);
        }

        let dz = ctx.adjoint(&out.dy);
        let mut eta = lin / fnorm;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=params.linesearch_max {
            if let Some((p, norm)) = trial(sd, ctx.point(), &dz, alpha, &mut run.nf) {
                if norm <= (1.0 - params.t * (1.0 - eta)) * fnorm {
                    accepted = Some((p, norm));
                    break;
                }
            }
            alpha *= params.theta;
            eta = 1.0 - params.theta * (1.0 - eta);
        }
        let Some((p, norm)) = accepted else {
            return Ok(run.finish(ctx, Status::LineSearchFailed));
        };
        ctx = run.accept(
            p,
            IterationRecord { iteration: k + 1, residual: norm, step_length: alpha, cg_iterations: out.iterations, eta },
        )?;
    }
    unreachable!()
}

/// Nonmonotone Riemannian inexact Newton-CG.
///
/// CG only has to reach `‖r‖ ≤ η̄_k‖F_k‖` with `η̄_k = min(1/(k+2), ‖F_k‖)`.
/// The full step is kept when it shrinks the residual by `tau`; otherwise the
/// largest `ρ^l` with `‖F(R(αΔZ))‖² − ‖F‖² ≤ −δα²|⟨grad f, ΔZ⟩| + γ_k‖F‖²`
/// is taken.
pub fn solve_nonmonotone(sd: &StructureData, z0: Point, params: &SolverParams) -> Result<(Point, SolverReport)> {
    params.validate()?;
    z0.validate(sd)?;
    let mut ctx = ResidualContext::new(sd, z0)?;
    let mut run = Run::new(sd, Algorithm::Nonmonotone, &ctx);
    let cap = params.cg_cap(sd.n());

    for k in 0.. {
        let fnorm = ctx.residual_norm();
        if fnorm < params.epsilon {
            return Ok(run.finish(ctx, Status::Converged));
        }
        if k >= params.outer_max_iter {
            return Ok(run.finish(ctx, Status::MaxIterations));
        }
        let sigma = params.sigma_max.min(fnorm);
        let eta_bar = eta_k(k).min(fnorm);
        let rhs = -ctx.residual();
        let out = cg_normal_solve(&ctx, sigma, &rhs, eta_bar, cap)?;
        run.ncg += out.iterations;
        if !out.accepted {
            log::debug!("CG cap {cap} reached with relative residual {:.3e}", out.rel_residual);
        }
        let dz = ctx.adjoint(&out.dy);

        let full = trial(sd, ctx.point(), &dz, 1.0, &mut run.nf);
        let mut accepted = None;
        if let Some((p, norm)) = &full {
            if *norm <= params.tau * fnorm {
                accepted = Some((p.clone(), *norm, 1.0));
            }
        }
        if accepted.is_none() {
            let g = ctx.gradient();
            let slope = product_inner(sd, ctx.point(), &g, &dz).abs();
            let f2 = fnorm * fnorm;
            let allowance = gamma_k(k) * f2;
            let mut alpha = 1.0;
            for l in 0..=params.linesearch_max {
                let t = if l == 0 { full.clone() } else { trial(sd, ctx.point(), &dz, alpha, &mut run.nf) };
                if let Some((p, norm)) = t {
                    if norm * norm - f2 <= -params.delta * alpha * alpha * slope + allowance {
                        accepted = Some((p, norm, alpha));
                        break;
                    }
                }
                alpha *= params.rho;
            }
        }
        let Some((p, norm, alpha)) = accepted else {
            return Ok(run.finish(ctx, Status::LineSearchFailed));
        };
        ctx = run.accept(
            p,
            IterationRecord {
                iteration: k + 1,
                residual: norm,
                step_length: alpha,
                cg_iterations: out.iterations,
                eta: eta_bar,
            },
        )?;
    }
    unreachable!()
}
