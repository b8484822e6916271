//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion does. Criteria run sequentially so that the
//! wall-time bounds are measured without competing work.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use pdstiep::balance::{sinkhorn, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pdstiep::bench::{run_case, Example};
use pdstiep::linalg::{orthogonality_defect, quasi_eigenvalues, real_schur, standardize_blocks, DEFAULT_DEFLATION_TOL};
use pdstiep::manifolds::{
    inner, product_inner, product_retract, project_product, project_tangent, Component, TangentVector,
};
use pdstiep::operator::{adjoint, differential, residual};
use pdstiep::solver::{gamma_sum, solve, Algorithm, SolverParams, SolverReport};
use pdstiep::spectrum::{
    build_structure, build_structure_with_order, initial_point, parse_spectrum, random_problem, rng_from_seed,
    BlockOrder, Point, ProblemMode, ProblemRng, StructureData,
};
use pdstiep::subspaces::{solution_subspaces, DEFAULT_CLUSTER_TOL};

const ALGORITHMS: [Algorithm; 2] = [Algorithm::Monotone, Algorithm::Nonmonotone];

struct Outcome {
    failures: Vec<u32>,
    nonmonotone_histories: Vec<Vec<f64>>,
}

impl Outcome {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let line = format!("criterion {id:>2} {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
        // bypass the harness capture so the lines always reach the log
        let mut out = std::io::stdout().lock();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
        if !pass {
            self.failures.push(id);
        }
    }

    fn keep(&mut self, rep: &SolverReport) {
        if rep.algorithm == Algorithm::Nonmonotone {
            self.nonmonotone_histories.push(rep.residual_history());
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn median(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) as f64 / 2.0
    } else {
        v[m] as f64
    }
}

fn digraph_structure() -> StructureData {
    let spec =
        parse_spectrum(&[c(1.0, 0.0), c(-0.0856, 0.3336), c(-0.0856, -0.3336), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
            .unwrap();
    // the displayed Schur factor has the unit eigenvalue first
    build_structure_with_order(&spec, BlockOrder::UnitFirst)
}

fn random_matrix(rng: &mut ProblemRng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale))
}

/// Random tangent vector. The positive factors are perturbed relative to
/// their entries, so small entries get proportionally small directions.
fn random_tangent(sd: &StructureData, z: &Point, rng: &mut ProblemRng) -> TangentVector {
    let n = sd.n();
    let amb = TangentVector {
        dc: z.c.component_mul(&random_matrix(rng, n, 1.0)),
        dq: random_matrix(rng, n, 1.0),
        dw: z.w.component_mul(&random_matrix(rng, n, 1.0)),
        dv: random_matrix(rng, n, 1.0),
    };
    project_product(sd, z, &amb)
}

/// Largest relative change of a positive entry, or Frobenius size of the
/// unconstrained directions, whichever is larger.
fn relative_size(sd: &StructureData, z: &Point, xi: &TangentVector) -> f64 {
    let c = xi.dc.component_div(&z.c).amax();
    let w = sd.i2().iter().map(|&(i, j)| (xi.dw[(i, j)] / z.w[(i, j)]).abs()).fold(0.0, f64::max);
    c.max(w).max(xi.dq.norm()).max(xi.dv.norm())
}

fn riemannian_norm(sd: &StructureData, z: &Point, xi: &TangentVector) -> f64 {
    product_inner(sd, z, xi, xi).sqrt()
}

/// A structure with `s` random conjugate pairs at order `n`, and a generic
/// point on the manifold.
fn random_instance(n: usize, s: usize, rng: &mut ProblemRng) -> (StructureData, Point) {
    let mut eig = vec![c(1.0, 0.0)];
    for _ in 0..s {
        let (re, im) = (rng.random_range(-0.5..0.5), rng.random_range(0.05..0.5));
        eig.push(c(re, im));
        eig.push(c(re, -im));
    }
    while eig.len() < n {
        eig.push(c(rng.random_range(-0.5..0.5), 0.0));
    }
    let sd = build_structure(&parse_spectrum(&eig).unwrap());
    let z0 = initial_point(&sd, ProblemMode::Dense, rng.random()).unwrap();
    let step = random_tangent(&sd, &z0, rng);
    let z = product_retract(&sd, &z0, &step.scaled(0.05 / relative_size(&sd, &z0, &step))).unwrap();
    (sd, z)
}

fn criterion_1_and_9(out: &mut Outcome) {
    let sd = digraph_structure();
    let params = SolverParams::default();
    let mut solutions = Vec::new();
    let mut details = Vec::new();
    let mut pass = true;
    for alg in ALGORITHMS {
        let mut ok = 0;
        let mut worst_time: f64 = 0.0;
        let mut its = Vec::new();
        for seed in 0..20u64 {
            let z0 = initial_point(&sd, ProblemMode::Dense, seed).unwrap();
            match solve(&sd, z0, &params, alg) {
                Ok((z, rep)) => {
                    out.keep(&rep);
                    worst_time = worst_time.max(rep.wall_time);
                    its.push(rep.outer_iterations);
                    if rep.converged() && rep.outer_iterations <= 30 && rep.final_residual <= 5e-8 && rep.wall_time < 1.0 {
                        ok += 1;
                    }
                    if rep.converged() {
                        solutions.push((alg, seed, z));
                    }
                }
                Err(e) => details.push(format!("{} seed {seed}: {e}", alg.tag())),
            }
        }
        pass &= ok >= 16;
        details.push(format!(
            "{} {ok}/20 (median IT {}, slowest {:.2} ms)",
            alg.tag(),
            median(&mut its),
            worst_time * 1e3
        ));
    }
    out.record(1, "digraph spectrum end to end", pass, details.join("; "));

    let mut bad = Vec::new();
    let mut worst_res: f64 = 0.0;
    let mut worst_cos: f64 = 0.0;
    for (alg, seed, z) in &solutions {
        match solution_subspaces(&sd, z, DEFAULT_CLUSTER_TOL) {
            Ok(res) => {
                let cn = z.c.norm();
                let r = res.residuals(&z.c).into_iter().fold(0.0, f64::max) / cn;
                let t1 = res.theta_block(0);
                let cos = t1.sum() / (t1.norm() * (z.c.nrows() as f64).sqrt());
                worst_res = worst_res.max(r);
                worst_cos = worst_cos.max(1.0 - cos.abs());
                if res.partition.sizes != [1, 2, 3] || r > 1e-8 || 1.0 - cos.abs() > 1e-8 {
                    bad.push(format!("{} seed {seed}: sizes {:?}", alg.tag(), res.partition.sizes));
                }
            }
            Err(e) => bad.push(format!("{} seed {seed}: {e}", alg.tag())),
        }
    }
    out.record(
        9,
        "invariant subspaces of converged digraph runs",
        bad.is_empty() && !solutions.is_empty(),
        format!(
            "{} runs, worst relative residual {worst_res:.1e}, worst 1-|cos| {worst_cos:.1e}{}",
            solutions.len(),
            if bad.is_empty() { String::new() } else { format!(", failing: {}", bad.join(", ")) }
        ),
    );
}

fn criterion_2(out: &mut Outcome) {
    let (a, b) = (1.0 / 40.0, 1.0 / 6.0);
    #[rustfmt::skip]
    let google = DMatrix::from_row_slice(6, 6, &[
        a, 7.0 / 8.0, a, a, a, a,
        a, a, 19.0 / 80.0, 19.0 / 80.0, 19.0 / 80.0, 19.0 / 80.0,
        b, b, b, b, b, b,
        a, a, a, 9.0 / 20.0, a, 9.0 / 20.0,
        a, a, a, 9.0 / 20.0, a, 9.0 / 20.0,
        b, b, b, b, b, b,
    ]);
    #[rustfmt::skip]
    let expected = DMatrix::from_row_slice(6, 6, &[
        0.0849, 0.7646, 0.0578, 0.0175, 0.0578, 0.0175,
        0.0553, 0.0142, 0.3573, 0.1080, 0.3573, 0.1080,
        0.3301, 0.0849, 0.2246, 0.0679, 0.2246, 0.0679,
        0.0998, 0.0257, 0.0679, 0.3694, 0.0679, 0.3694,
        0.0998, 0.0257, 0.0679, 0.3694, 0.0679, 0.3694,
        0.3301, 0.0849, 0.2246, 0.0679, 0.2246, 0.0679,
    ]);
    let res = sinkhorn(&google, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let dev = (&res.balanced - &expected).amax();
    out.record(
        2,
        "Sinkhorn scaling of the Google matrix",
        dev <= 5e-4,
        format!("max entry deviation {dev:.2e} after {} iterations", res.iterations),
    );
}

fn criterion_3(out: &mut Outcome) {
    let params = SolverParams::default();
    let mut pass = true;
    let mut details = Vec::new();
    for n in [50, 100, 200] {
        for alg in ALGORITHMS {
            let mut its = Vec::new();
            let mut worst_time: f64 = 0.0;
            let mut bad = 0;
            for seed in 0..10u64 {
                match run_case(Example::Dense, n, None, seed, alg, &params, BlockOrder::default()) {
                    Ok(rep) => {
                        out.keep(&rep);
                        its.push(rep.outer_iterations);
                        worst_time = worst_time.max(rep.wall_time);
                        if rep.converged() && (rep.final_residual > 5e-8 || rep.final_gradient_norm > 1e-6) {
                            bad += 1;
                        }
                        if n == 100 && rep.wall_time > 10.0 {
                            bad += 1;
                        }
                    }
                    Err(_) => {
                        its.push(usize::MAX);
                        bad += 1;
                    }
                }
            }
            let med = median(&mut its);
            pass &= med <= 15.0 && bad == 0;
            details.push(format!("n={n} {} median IT {med} slowest {worst_time:.2}s", alg.tag()));
        }
    }
    out.record(3, "dense random problems", pass, details.join("; "));
}

fn criterion_4(out: &mut Outcome) {
    let params = SolverParams::default();
    let mut pass = true;
    let mut details = Vec::new();
    for n in [100, 200] {
        let p = n / 4;
        let mut zero_ok = true;
        for seed in 0..10u64 {
            let (spec, target) = random_problem(n, ProblemMode::LowRank { p }, seed).unwrap();
            let prescribed = spec.to_complex().iter().filter(|z| z.norm() <= 1e-8).count();
            let schur = real_schur(&target, DEFAULT_DEFLATION_TOL).unwrap();
            let raw = quasi_eigenvalues(&schur.t, &schur.block_sizes).iter().filter(|z| z.norm() <= 1e-8).count();
            zero_ok &= prescribed >= n - p && raw >= n - p;
        }
        for alg in ALGORITHMS {
            let mut its = Vec::new();
            for seed in 0..10u64 {
                match run_case(Example::LowRank, n, Some(p), seed, alg, &params, BlockOrder::default()) {
                    Ok(rep) => {
                        out.keep(&rep);
                        its.push(if rep.converged() { rep.outer_iterations } else { usize::MAX });
                    }
                    Err(_) => its.push(usize::MAX),
                }
            }
            let med = median(&mut its);
            pass &= med <= 12.0;
            details.push(format!("n={n} p={p} {} median IT {med}", alg.tag()));
        }
        pass &= zero_ok;
        details.push(format!("n={n} zero eigenvalues {}", if zero_ok { "present" } else { "missing" }));
    }
    out.record(4, "low-rank random problems", pass, details.join("; "));
}

fn instances() -> impl Iterator<Item = (usize, usize, u64)> {
    let shapes = [(4, 0), (4, 1), (6, 0), (6, 1), (6, 2), (10, 0), (10, 1), (10, 2)];
    (0..100u64).map(move |k| {
        let (n, s) = shapes[k as usize % shapes.len()];
        (n, s, k)
    })
}

fn criterion_5(out: &mut Outcome) {
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for (n, s, k) in instances() {
        let mut rng = rng_from_seed(1000 + k);
        let (sd, z) = random_instance(n, s, &mut rng);
        let xi = random_tangent(&sd, &z, &mut rng);
        let eta = random_matrix(&mut rng, n, 1.0);
        let lhs = differential(&sd, &z, &xi).unwrap().dot(&eta);
        let rhs = product_inner(&sd, &z, &xi, &adjoint(&sd, &z, &eta).unwrap());
        let scale = riemannian_norm(&sd, &z, &xi) * eta.norm() * (1.0 + residual(&sd, &z).unwrap().norm());
        let rel = (lhs - rhs).abs() / scale;
        worst = worst.max(rel);
        if rel > 1e-10 {
            violations += 1;
        }
    }
    out.record(
        5,
        "adjoint identity",
        violations == 0,
        format!("100 cases, {violations} violations, worst scaled gap {worst:.1e}"),
    );
}

fn criterion_6(out: &mut Outcome) {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for (n, s, k) in instances() {
        let mut rng = rng_from_seed(2000 + k);
        let (sd, z) = random_instance(n, s, &mut rng);
        let xi = random_tangent(&sd, &z, &mut rng);
        let xi = xi.scaled(1.0 / relative_size(&sd, &z, &xi));
        let fp = residual(&sd, &product_retract(&sd, &z, &xi.scaled(h)).unwrap()).unwrap();
        let fm = residual(&sd, &product_retract(&sd, &z, &xi.scaled(-h)).unwrap()).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let exact = differential(&sd, &z, &xi).unwrap();
        let rel = (&fd - &exact).norm() / exact.norm();
        worst = worst.max(rel);
        if rel > 1e-6 {
            violations += 1;
        }
    }
    out.record(
        6,
        "central differences of F",
        violations == 0,
        format!("100 cases at step {h:e}, {violations} violations, worst relative error {worst:.1e}"),
    );
}

fn criterion_7(out: &mut Outcome) {
    const COMPONENTS: [Component; 4] = [Component::C, Component::Q, Component::W, Component::V];
    let mut idem = 0;
    let mut orth = 0;
    let mut rigid = 0;
    let mut min_order = f64::INFINITY;
    for (n, s, k) in instances() {
        let mut rng = rng_from_seed(3000 + k);
        let (sd, z) = random_instance(n, s, &mut rng);
        for which in COMPONENTS {
            let x = random_matrix(&mut rng, n, 1.0);
            let px = project_tangent(&sd, which, &z, &x);
            if (project_tangent(&sd, which, &z, &px) - &px).norm() > 1e-12 * x.norm().max(1.0) {
                idem += 1;
            }
            let t = project_tangent(&sd, which, &z, &random_matrix(&mut rng, n, 1.0));
            let gap = inner(&sd, which, &z, &(&x - &px), &t);
            let scale = inner(&sd, which, &z, &t, &t).sqrt() * inner(&sd, which, &z, &x, &x).sqrt();
            if gap.abs() > 1e-11 * scale.max(1e-300) {
                orth += 1;
            }
        }
        let xi = random_tangent(&sd, &z, &mut rng);
        let xi = xi.scaled(1.0 / relative_size(&sd, &z, &xi));
        let dist = |t: f64| {
            let r = product_retract(&sd, &z, &xi.scaled(t)).unwrap();
            ((&r.c - &z.c - &xi.dc * t).norm_squared()
                + (&r.q - &z.q - &xi.dq * t).norm_squared()
                + (&r.w - &z.w - &xi.dw * t).norm_squared()
                + (&r.v - &z.v - &xi.dv * t).norm_squared())
            .sqrt()
        };
        let (d1, d2) = (dist(1e-2), dist(1e-3));
        let order = (d1 / d2).log10();
        min_order = min_order.min(order);
        if order < 1.9 {
            rigid += 1;
        }
    }

    let mut invariant = 0;
    let mut steps = 0;
    for (k, (n, s)) in [(4, 1), (6, 2), (10, 2), (10, 0)].into_iter().enumerate() {
        let mut rng = rng_from_seed(4000 + k as u64);
        let (sd, mut z) = random_instance(n, s, &mut rng);
        for _ in 0..250 {
            let xi = random_tangent(&sd, &z, &mut rng);
            let xi = xi.scaled(0.1 / relative_size(&sd, &z, &xi));
            steps += 1;
            match product_retract(&sd, &z, &xi) {
                Ok(next) if next.validate(&sd).is_ok() => z = next,
                _ => invariant += 1,
            }
        }
    }
    let total = idem + orth + rigid + invariant;
    out.record(
        7,
        "manifold suite",
        total == 0,
        format!(
            "idempotence {idem}, orthogonality {orth}, rigidity {rigid} (min order {min_order:.2}), \
             invariants {invariant} over {steps} retraction steps"
        ),
    );
}

/// Characteristic polynomial coefficients `[1, c1, …, cn]` by Faddeev-LeVerrier.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * coeffs[k - 1];
        coeffs.push(-(a * &m).trace() / k as f64);
    }
    coeffs
}

/// Roots of a monic polynomial by Durand-Kerner iteration.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| coeffs.iter().fold(c(0.0, 0.0), |acc, &k| acc * z + k);
    let mut roots: Vec<Complex64> = (0..n).map(|k| c(0.4, 0.9).powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let denom = (0..n).filter(|&j| j != i).fold(c(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    roots
}

fn multiset_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut rest: Vec<Complex64> = b.to_vec();
    let mut worst: f64 = 0.0;
    for x in a {
        let (i, d) = rest
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        worst = worst.max(d);
        rest.swap_remove(i);
    }
    worst
}

fn criterion_8(out: &mut Outcome) {
    let mut recon = 0;
    let mut orthog = 0;
    let mut blocks = 0;
    let mut failures = 0;
    let mut rng = rng_from_seed(5000);
    for k in 0..200usize {
        let n = 2 + k % 19;
        let a = random_matrix(&mut rng, n, 1.0);
        let form = match real_schur(&a, DEFAULT_DEFLATION_TOL).and_then(|f| standardize_blocks(&f)) {
            Ok(f) => f,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        if (form.reconstruct() - &a).norm() > 1e-11 * n as f64 * a.norm() {
            recon += 1;
        }
        if orthogonality_defect(&form.q) > 1e-12 * n as f64 {
            orthog += 1;
        }
        for (o, s) in form.block_offsets().into_iter().zip(form.block_sizes.iter()) {
            let t = &form.t;
            if *s == 2 && (t[(o, o)] != t[(o + 1, o + 1)] || t[(o, o + 1)] * t[(o + 1, o)] >= 0.0) {
                blocks += 1;
            }
        }
    }
    let mut oracle = 0;
    let mut worst: f64 = 0.0;
    for k in 0..150usize {
        let n = 2 + k % 3;
        let a = random_matrix(&mut rng, n, 1.0);
        let form = standardize_blocks(&real_schur(&a, DEFAULT_DEFLATION_TOL).unwrap()).unwrap();
        let computed = quasi_eigenvalues(&form.t, &form.block_sizes);
        let gap = multiset_gap(&computed, &poly_roots(&char_poly(&a)));
        worst = worst.max(gap);
        if gap > 1e-8 {
            oracle += 1;
        }
    }
    let total = recon + orthog + blocks + failures + oracle;
    out.record(
        8,
        "Schur suite",
        total == 0,
        format!(
            "200 matrices: reconstruction {recon}, orthogonality {orthog}, block form {blocks}, errors {failures}; \
             150 characteristic-polynomial checks: {oracle} mismatches (worst {worst:.1e})"
        ),
    );
}

fn criterion_10(out: &mut Outcome) {
    let params = SolverParams::default();
    let mut pass = true;
    let mut details = Vec::new();
    for alg in ALGORITHMS {
        let mut fast = 0;
        for seed in 0..20u64 {
            let Ok(rep) = run_case(Example::Dense, 50, None, seed, alg, &params, BlockOrder::default()) else {
                continue;
            };
            out.keep(&rep);
            if !rep.converged() {
                continue;
            }
            let hist = rep.residual_history();
            if let Some(first) = hist.iter().position(|&r| r < 1e-3) {
                if hist.len() - 1 - first <= 3 {
                    fast += 1;
                }
            }
        }
        pass &= fast >= 16;
        details.push(format!("{} {fast}/20", alg.tag()));
    }
    out.record(10, "quadratic tail at n = 50", pass, details.join("; "));
}

fn criterion_11(out: &mut Outcome) {
    let bound = (gamma_sum() / 2.0).exp();
    let mut violations = 0;
    let mut iterates = 0;
    let mut worst: f64 = 0.0;
    for hist in &out.nonmonotone_histories {
        for r in hist {
            iterates += 1;
            let ratio = r / hist[0];
            worst = worst.max(ratio);
            if ratio > bound {
                violations += 1;
            }
        }
    }
    let runs = out.nonmonotone_histories.len();
    out.record(
        11,
        "nonmonotone growth bound",
        violations == 0 && runs > 0,
        format!("{runs} runs, {iterates} iterates, {violations} violations, worst ratio {worst:.3} (bound {bound:.3})"),
    );
}

#[test]
fn acceptance() {
    let mut out = Outcome { failures: Vec::new(), nonmonotone_histories: Vec::new() };
    criterion_1_and_9(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_5(&mut out);
    criterion_6(&mut out);
    criterion_7(&mut out);
    criterion_8(&mut out);
    criterion_10(&mut out);
    criterion_11(&mut out);
    assert!(out.failures.is_empty(), "failing criteria: {:?}", out.failures);
}
