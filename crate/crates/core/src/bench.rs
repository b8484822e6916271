//! Batch runs over random test problems, reported in the column layout
//! CT. / IT. / NF. / NCG. / Res. / grad.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{solve, Algorithm, SolverParams, SolverReport};
use crate::spectrum::{build_structure_with_order, initial_point, random_problem, BlockOrder, ProblemMode};

/// Seed of the starting point derived from a problem seed, so that the
/// target matrix and the start are independent draws.
pub fn start_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Which family of random problems to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Example {
    /// Balanced uniform random matrices.
    Dense,
    /// Balanced products of n×p and p×n uniform random matrices.
    LowRank,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub example: Example,
    pub sizes: Vec<usize>,
    /// `p = round(p_ratio · n)` for [`Example::LowRank`].
    pub p_ratio: f64,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub params: SolverParams,
    pub order: BlockOrder,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(rename = "Alg.")]
    pub algorithm: String,
    pub n: usize,
    pub p: Option<usize>,
    pub seed: u64,
    #[serde(rename = "CT.")]
    pub ct: f64,
    #[serde(rename = "IT.")]
    pub it: usize,
    #[serde(rename = "NF.")]
    pub nf: usize,
    #[serde(rename = "NCG.")]
    pub ncg: usize,
    #[serde(rename = "Res.")]
    pub res: f64,
    #[serde(rename = "grad.")]
    pub grad: f64,
    pub status: String,
}

impl BenchRow {
    fn from_report(n: usize, p: Option<usize>, seed: u64, rep: &SolverReport) -> Self {
        BenchRow {
            algorithm: rep.algorithm.tag().to_string(),
            n,
            p,
            seed,
            ct: rep.wall_time,
            it: rep.outer_iterations,
            nf: rep.function_evaluations,
            ncg: rep.cg_iterations_total,
            res: rep.final_residual,
            grad: rep.final_gradient_norm,
            status: format!("{:?}", rep.status),
        }
    }

    fn failed(alg: Algorithm, n: usize, p: Option<usize>, seed: u64, err: &Error) -> Self {
        BenchRow {
            algorithm: alg.tag().to_string(),
            n,
            p,
            seed,
            ct: 0.0,
            it: 0,
            nf: 0,
            ncg: 0,
            res: f64::NAN,
            grad: f64::NAN,
            status: format!("error: {err}"),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == "Converged"
    }
}

/// Low-rank inner dimension for size `n`.
pub fn low_rank_p(n: usize, p_ratio: f64) -> usize {
    ((p_ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Draw one problem, solve it from its seeded start and return the report.
pub fn run_case(
    example: Example,
    n: usize,
    p: Option<usize>,
    seed: u64,
    algorithm: Algorithm,
    params: &SolverParams,
    order: BlockOrder,
) -> Result<SolverReport> {
    let mode = match (example, p) {
        (Example::Dense, _) => ProblemMode::Dense,
        (Example::LowRank, Some(p)) => ProblemMode::LowRank { p },
        (Example::LowRank, None) => return Err(Error::InvalidArgument("low-rank runs need p".into())),
    };
    let (spec, _) = random_problem(n, mode, seed)?;
    let sd = build_structure_with_order(&spec, order);
    let z0 = initial_point(&sd, mode, start_seed(seed))?;
    Ok(solve(&sd, z0, params, algorithm)?.1)
}

/// Run every (algorithm, n, seed) cell, in parallel, and return rows sorted
/// by algorithm, size and seed. Failing cells are recorded, not propagated.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if let Some(&n) = cfg.sizes.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidArgument(format!("bench sizes must be at least 2, got {n}")));
    }
    let mut cells = Vec::new();
    for &alg in &cfg.algorithms {
        for &n in &cfg.sizes {
            for &seed in &cfg.seeds {
                cells.push((alg, n, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rows: Vec<BenchRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(alg, n, seed)| {
                let p = (cfg.example == Example::LowRank).then(|| low_rank_p(n, cfg.p_ratio));
                match run_case(cfg.example, n, p, seed, alg, &cfg.params, cfg.order) {
                    Ok(rep) => BenchRow::from_report(n, p, seed, &rep),
                    Err(e) => BenchRow::failed(alg, n, p, seed, &e),
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| (&a.algorithm, a.n, a.seed).cmp(&(&b.algorithm, b.n, b.seed)));
    Ok(rows)
}

/// Fixed-width text table.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>6} {:>5} {:>6} {:>10} {:>5} {:>5} {:>7} {:>10} {:>10}  status",
        "Alg.", "n", "p", "seed", "CT.", "IT.", "NF.", "NCG.", "Res.", "grad."
    )
    .expect("writing to a String");
    for r in rows {
        let p = r.p.map_or_else(|| "-".to_string(), |p| p.to_string());
        writeln!(
            out,
            "{:<12} {:>6} {:>5} {:>6} {:>9.4}s {:>5} {:>5} {:>7} {:>10.2e} {:>10.2e}  {}",
            r.algorithm, r.n, p, r.seed, r.ct, r.it, r.nf, r.ncg, r.res, r.grad, r.status
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_csv<W: Write>(writer: W, rows: &[BenchRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    wtr.flush()?;
    Ok(())
}
