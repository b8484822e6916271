use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pdstiep::bench::{self, BenchConfig, Example};
use pdstiep::linalg::{real_schur, standardize_blocks, SchurForm, DEFAULT_DEFLATION_TOL};
use pdstiep::solver::{solve, Algorithm, SolverParams, Status};
use pdstiep::spectrum::{build_structure_with_order, initial_point, parse_spectrum, BlockOrder, ProblemMode};
use pdstiep::subspaces::{
    invariant_subspaces, partition_blocks, refine_block_schur, schur_form_from_point, DEFAULT_CLUSTER_TOL,
};
use pdstiep::{balance, io, Error};

#[derive(Parser)]
#[command(name = "pdstiep", version, about = "Positive doubly stochastic matrices with a prescribed spectrum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a positive doubly stochastic matrix with the given spectrum.
    Solve(SolveArgs),
    /// Scale a positive matrix to doubly stochastic form.
    Balance {
        matrix: PathBuf,
        /// Write the balanced matrix here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = balance::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = balance::DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Real Schur decomposition with standardized 2x2 blocks.
    Schur {
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEFLATION_TOL)]
        tol: f64,
    },
    /// Invariant subspaces of a matrix, clustered by eigenvalue.
    Subspaces {
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CLUSTER_TOL)]
        cluster_tol: f64,
        /// Orthogonal Schur factor to use instead of a fresh decomposition (needs --t).
        #[arg(long, requires = "t")]
        q: Option<PathBuf>,
        /// Quasi-triangular Schur factor matching --q.
        #[arg(long, requires = "q")]
        t: Option<PathBuf>,
        /// Admissible relative mismatch between the matrix and the supplied factors,
        /// which are refined to an exact block Schur form before use.
        #[arg(long, default_value_t = 1e-6)]
        reconstruction_tol: f64,
    },
    /// Solve batches of random test problems and tabulate the runs.
    Bench(BenchArgs),
    /// Export the weighted digraph of a matrix in DOT format.
    Digraph {
        matrix: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        /// Write the DOT document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Monotone,
    Nonmonotone,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Monotone => Algorithm::Monotone,
            AlgorithmArg::Nonmonotone => Algorithm::Nonmonotone,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchAlgorithmArg {
    Monotone,
    Nonmonotone,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dense,
    Lowrank,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    PairsFirst,
    UnitFirst,
}

impl From<OrderArg> for BlockOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::PairsFirst => BlockOrder::PairsFirst,
            OrderArg::UnitFirst => BlockOrder::UnitFirst,
        }
    }
}

#[derive(Args)]
struct ParamArgs {
    /// Stopping tolerance on the residual norm.
    #[arg(long, default_value_t = 5e-8)]
    eps: f64,
    #[arg(long, default_value_t = 1e-6)]
    sigma_max: f64,
    #[arg(long, default_value_t = 0.1)]
    eta_max: f64,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long = "t-decrease", default_value_t = 1e-4)]
    t_decrease: f64,
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    /// CG iteration cap (default n²).
    #[arg(long)]
    cg_max_iter: Option<usize>,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl ParamArgs {
    fn params(&self) -> SolverParams {
        SolverParams {
            epsilon: self.eps,
            sigma_max: self.sigma_max,
            eta_max: self.eta_max,
            theta: self.theta,
            t: self.t_decrease,
            tau: self.tau,
            rho: self.rho,
            delta: self.delta,
            cg_max_iter: self.cg_max_iter,
            outer_max_iter: self.max_iter,
            ..SolverParams::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Spectrum document (JSON, or TOML by extension) with an `eigenvalues` list of [re, im] pairs.
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long, value_enum, default_value = "nonmonotone")]
    algorithm: AlgorithmArg,
    /// Seed of the random starting point.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distribution of the random matrix behind the starting point.
    #[arg(long, value_enum, default_value = "dense")]
    mode: ModeArg,
    /// Inner dimension for --mode lowrank.
    #[arg(long)]
    p: Option<usize>,
    /// Layout of the diagonal blocks of the Schur factor.
    #[arg(long, value_enum, default_value = "unit-first")]
    order: OrderArg,
    /// Directory receiving C.csv, Q.csv, T.csv and report.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// 1: dense random matrices, 2: low-rank random matrices.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    example: u8,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    sizes: Vec<usize>,
    /// Low-rank inner dimension as a fraction of n.
    #[arg(long, default_value_t = 0.25)]
    p_ratio: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, value_enum, default_value = "both")]
    algorithm: BenchAlgorithmArg,
    #[arg(long, value_enum, default_value = "pairs-first")]
    order: OrderArg,
    /// Also write the rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

/// Raised when a solver run ends without meeting its tolerance.
#[derive(Debug, thiserror::Error)]
#[error("solver stopped with status {0:?}")]
struct NonConvergence(Status);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NonConvergence>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::NotConverged { .. }) => 3,
        Some(
            Error::SchurFailure { .. }
            | Error::DegenerateBlock { .. }
            | Error::SingularInput
            | Error::SpectraOverlap { .. }
            | Error::ZeroDenominator { .. }
            | Error::CgBreakdown { .. }
            | Error::InvariantViolation(_),
        ) => 4,
        _ => 2,
    }
}

fn threads_from_env() -> Result<usize> {
    match std::env::var("PDSTIEP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::InvalidArgument(format!("PDSTIEP_THREADS=`{v}`: {e}")).into()),
        Err(_) => Ok(0),
    }
}

fn print_matrix(label: &str, m: &nalgebra::DMatrix<f64>) -> Result<()> {
    println!("# {label}");
    io::write_matrix(std::io::stdout().lock(), m)?;
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let raw = io::read_spectrum_file(&args.spectrum)
        .with_context(|| format!("reading spectrum {}", args.spectrum.display()))?;
    let spec = parse_spectrum(&raw)?;
    let sd = build_structure_with_order(&spec, args.order.into());
    let mode = match (args.mode, args.p) {
        (ModeArg::Dense, _) => ProblemMode::Dense,
        (ModeArg::Lowrank, Some(p)) => ProblemMode::LowRank { p },
        (ModeArg::Lowrank, None) => return Err(Error::InvalidArgument("--mode lowrank needs --p".into()).into()),
    };
    let params = args.params.params();
    params.validate()?;
    let z0 = initial_point(&sd, mode, args.seed)?;
    let (z, report) = solve(&sd, z0, &params, args.algorithm.into())?;
    let form = schur_form_from_point(&sd, &z)?;

    std::fs::create_dir_all(&args.out_dir)?;
    io::write_matrix_file(&args.out_dir.join("C.csv"), &z.c)?;
    io::write_matrix_file(&args.out_dir.join("Q.csv"), &form.q)?;
    io::write_matrix_file(&args.out_dir.join("T.csv"), &form.t)?;
    io::write_json_file(&args.out_dir.join("report.json"), &report)?;
    println!(
        "{}: {:?} after {} iterations, NF {}, NCG {}, residual {:.3e}, gradient {:.3e}, {:.3}s",
        report.algorithm.tag(),
        report.status,
        report.outer_iterations,
        report.function_evaluations,
        report.cg_iterations_total,
        report.final_residual,
        report.final_gradient_norm,
        report.wall_time
    );
    if report.converged() {
        Ok(())
    } else {
        Err(NonConvergence(report.status).into())
    }
}

fn cmd_balance(matrix: &Path, out: Option<&Path>, tol: f64, max_iter: usize) -> Result<()> {
    let a = io::read_matrix_file(matrix)?;
    let res = balance::sinkhorn(&a, tol, max_iter)?;
    match out {
        Some(path) => io::write_matrix_file(path, &res.balanced)?,
        None => io::write_matrix(std::io::stdout().lock(), &res.balanced)?,
    }
    eprintln!("balanced in {} iterations, residual {:.3e}", res.iterations, res.residual);
    Ok(())
}

fn decompose(path: &Path, tol: f64) -> Result<(nalgebra::DMatrix<f64>, SchurForm)> {
    let a = io::read_matrix_file(path)?;
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())).into());
    }
    let form = standardize_blocks(&real_schur(&a, tol)?)?;
    Ok((a, form))
}

fn cmd_schur(matrix: &Path, tol: f64) -> Result<()> {
    let (_, form) = decompose(matrix, tol)?;
    print_matrix("Q", &form.q)?;
    print_matrix("T", &form.t)?;
    println!("# blocks {:?}", form.block_sizes);
    Ok(())
}

fn cmd_subspaces(matrix: &Path, cluster_tol: f64, q: Option<&Path>, t: Option<&Path>, recon_tol: f64) -> Result<()> {
    let (c, form, part) = match (q, t) {
        (Some(q), Some(t)) => {
            let c = io::read_matrix_file(matrix)?;
            let t = io::read_matrix_file(t)?;
            let block_sizes = pdstiep::linalg::detect_block_sizes(&t);
            let form = SchurForm { q: io::read_matrix_file(q)?, t, block_sizes };
            if form.q.shape() != c.shape() || form.t.shape() != c.shape() {
                return Err(Error::DimensionMismatch("Schur factors do not match the matrix".into()).into());
            }
            let mismatch = (form.reconstruct() - &c).norm();
            if !(mismatch <= recon_tol * c.norm()) {
                return Err(Error::ReconstructionMismatch { mismatch }.into());
            }
            let part = partition_blocks(&form, cluster_tol)?;
            let refined = refine_block_schur(&c, &form, &part)?;
            (c, refined, part)
        }
        _ => {
            let (c, form) = decompose(matrix, DEFAULT_DEFLATION_TOL)?;
            let part = partition_blocks(&form, cluster_tol)?;
            (c, form, part)
        }
    };
    let res = invariant_subspaces(&c, &form, &part)?;
    println!("# partition {:?}", part.sizes);
    for (i, eig) in part.eigenvalues.iter().enumerate() {
        let list: Vec<String> = eig.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
        println!("# block {} eigenvalues [{}]", i + 1, list.join(", "));
    }
    print_matrix("Theta", &res.theta)?;
    for (i, r) in res.residuals(&c).iter().enumerate() {
        println!("# block {} residual {:.3e}", i + 1, r);
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let params = args.params.params();
    params.validate()?;
    let algorithms = match args.algorithm {
        BenchAlgorithmArg::Monotone => vec![Algorithm::Monotone],
        BenchAlgorithmArg::Nonmonotone => vec![Algorithm::Nonmonotone],
        BenchAlgorithmArg::Both => vec![Algorithm::Monotone, Algorithm::Nonmonotone],
    };
    let cfg = BenchConfig {
        example: if args.example == 1 { Example::Dense } else { Example::LowRank },
        sizes: args.sizes.clone(),
        p_ratio: args.p_ratio,
        seeds: args.seeds.clone(),
        algorithms,
        params,
        order: args.order.into(),
        threads: threads_from_env()?,
    };
    let rows = bench::run_bench(&cfg)?;
    print!("{}", bench::format_table(&rows));
    if let Some(path) = &args.csv {
        bench::write_csv(std::fs::File::create(path)?, &rows)?;
    }
    Ok(())
}

fn cmd_digraph(matrix: &Path, threshold: f64, out: Option<&Path>) -> Result<()> {
    let c = io::read_matrix_file(matrix)?;
    let dot = io::digraph_dot(&c, threshold)?;
    match out {
        Some(path) => std::fs::write(path, dot)?,
        None => print!("{dot}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Balance { matrix, out, tol, max_iter } => cmd_balance(&matrix, out.as_deref(), tol, max_iter),
        Command::Schur { matrix, tol } => cmd_schur(&matrix, tol),
        Command::Subspaces { matrix, cluster_tol, q, t, reconstruction_tol } => {
            cmd_subspaces(&matrix, cluster_tol, q.as_deref(), t.as_deref(), reconstruction_tol)
        }
        Command::Bench(args) => cmd_bench(&args),
        Command::Digraph { matrix, threshold, out } => cmd_digraph(&matrix, threshold, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
