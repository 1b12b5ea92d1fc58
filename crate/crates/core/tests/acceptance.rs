//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 5 8`.

use std::time::Instant;

use mar_impute::cli::parse_config;
use mar_impute::el::{default_tolerance, weights_from_lambda, DEFAULT_MAX_ITER};
use mar_impute::estimators::{estimate_with, EstimateOptions};
use mar_impute::expr::{Env, Expr, Scope};
use mar_impute::inference::{score_model_at, variance_general};
use mar_impute::model::{residuals, LinearIntercept};
use mar_impute::numeric::gauss_legendre;
use mar_impute::param::{fit_least_squares, Bandwidths, ScoreModel};
use mar_impute::simulation::{
    generate_dataset, run_coverage_study, run_mse_study, run_theta_study, EstimatorSpec, SimulationConfig, ThetaSource,
};
use mar_impute::{
    estimate, eval_gradient, eval_regression, parse_expression, solve_lagrange, ElStatus, Estimator, Residual,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances, as fixed by the acceptance criteria.
const C1_VARIANCE_BAND: f64 = 0.10;
const C1_MSE_BAND: f64 = 0.15;
const C2_MSE_BAND: f64 = 0.15;
const GAP_SE: f64 = 2.0;
const C4_PAPER_FI: f64 = 0.15017;
const C4_BAND: f64 = 0.25;
const C5_REDUCTION_REL: f64 = 1e-8;
const C5_OLS_REL: f64 = 1e-10;
const C5_ORACLE: f64 = 1e-8;
const C6_COVERAGE: (f64, f64) = (0.93, 0.97);
const C7_RATIO: (f64, f64) = (0.85, 1.20);

const REPS: usize = 2000;
const SEED: u64 = 20090101;

type Criterion = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(text: &str) -> SimulationConfig {
    parse_config(text).unwrap_or_else(|e| panic!("bad acceptance config: {e}\n{text}"))
}

fn spec(m: Estimator, s: ThetaSource) -> EstimatorSpec {
    EstimatorSpec::new(m, s)
}

fn within(v: f64, target: f64, band: f64) -> bool {
    (v - target).abs() <= band * target.abs()
}

/// `int_{-1}^{1} f(x) dx / 2` by composite Gauss–Legendre.
fn uniform_mean(f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_legendre(20);
    let panels = 64;
    let width = 2.0 / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = -1.0 + (k as f64 + 0.5) * width;
        for (u, w) in nodes.iter().zip(&weights) {
            total += 0.5 * width * w * f(mid + 0.5 * width * u);
        }
    }
    total / 2.0
}

fn criterion_1() -> Outcome {
    // h = y, r = 2x: chi = r, hbar(e) = e, D = E X = 0, so sigma^2 = Var(2X) + sigma^2/EZ - sigma^2/EZ = 4/3
    let target = uniform_mean(|x| 4.0 * x * x);
    let cfg = config(&format!("model = linear\ntheta = 2\nh = y\nn = 2000\nseed = {SEED}\n"));
    let ds = generate_dataset(&cfg, &mut cfg.rng(0)).unwrap();
    let m = cfg.model.as_ref();
    let theta = fit_least_squares(&ds, m, &cfg.theta, 100, 1e-12).unwrap().theta;
    let s = score_model_at(&ds, m, &theta, &Bandwidths::default()).unwrap();
    let plug_in = variance_general(&ds, m, &theta, &cfg.h, &s).unwrap().variance;

    let mut cfg = cfg;
    cfg.n = 1000;
    cfg.reps = REPS;
    let report = run_mse_study(&cfg).unwrap();
    let n_mse = report.summaries[0].mse * cfg.n as f64;
    outcome(
        within(plug_in, target, C1_VARIANCE_BAND) && within(n_mse, target, C1_MSE_BAND),
        format!("sigma2 = {target:.4}; plug-in at n=2000 {plug_in:.4} (+-10%); n*MSE at n=1000 {n_mse:.4} (+-15%)"),
    )
}

fn criterion_2() -> Outcome {
    // r = cos(2x), pi = 1, normal errors with unit variance
    let mean = uniform_mean(|x| (2.0 * x).cos());
    let var_r = uniform_mean(|x| (2.0 * x).cos().powi(2)) - mean * mean;
    let d = uniform_mean(|x| -x * (2.0 * x).sin());
    let info = uniform_mean(|x| (x * (2.0 * x).sin()).powi(2));
    let var_hat = var_r + d * d / info;

    let cfg = config(&format!(
        "model = cosine\ntheta = 2\nh = y\nn = 1000\nmissing = none\nreps = {REPS}\nseed = {SEED}\n\
         estimators = fi_weighted@true, fi_weighted@ols\n"
    ));
    let report = run_mse_study(&cfg).unwrap();
    let n = cfg.n as f64;
    let true_mse = report.summaries[0].mse * n;
    let ols_mse = report.summaries[1].mse * n;
    outcome(
        within(true_mse, var_r, C2_MSE_BAND) && within(ols_mse, var_hat, C2_MSE_BAND),
        format!(
            "true theta: n*MSE {true_mse:.4} vs {var_r:.4}; least squares: n*MSE {ols_mse:.4} vs {var_hat:.4} (+-15%)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let fi = spec(Estimator::FiWeighted, ThetaSource::Ols);
    let pi = spec(Estimator::PartiallyImputed, ThetaSource::Ols);
    let ipw = spec(Estimator::IpwNaive, ThetaSource::Ols);
    let mut pass = true;
    let mut lines = Vec::new();
    for model in ["linear", "cosine"] {
        for missing in ["logistic", "none"] {
            for n in [50, 100] {
                let cfg = config(&format!(
                    "model = {model}\ntheta = 2\nh = y\nn = {n}\nmissing = {missing}\nreps = {REPS}\nseed = {SEED}\n\
                     estimators = fi_weighted@ols, pi@ols, ipw\n"
                ));
                let r = run_mse_study(&cfg).unwrap();
                let g1 = r.paired_gap(fi, pi).unwrap();
                let g2 = r.paired_gap(pi, ipw).unwrap();
                let ok = g1.z() > GAP_SE && g2.z() > GAP_SE;
                pass &= ok;
                let mse = |s| r.summary(s).unwrap().mse;
                lines.push(format!(
                    "    {} {model:<6} pi={missing:<8} n={n:<3} FI {:.6} < PI {:.6} < IPW {:.6}; gaps {:.1} and {:.1} SE",
                    if ok { "ok  " } else { "MISS" },
                    mse(fi),
                    mse(pi),
                    mse(ipw),
                    g1.z(),
                    if g2.se > 0.0 { g2.z() } else { f64::NAN },
                ));
            }
        }
    }
    outcome(
        pass,
        format!("FI < PI < IPW by > 2 MC SE in all 8 cells\n{}", lines.join("\n")),
    )
}

fn criterion_4() -> Outcome {
    let cfg = config(&format!(
        "model = linear\ntheta = 2\nh = x1*exp(x1*y)\nn = 100\nreps = {REPS}\nseed = {SEED}\n\
         estimators = fi_weighted@ols, fi_unweighted@ols, pi@ols\n"
    ));
    let r = run_mse_study(&cfg).unwrap();
    let [fi, u, pi] = [cfg.estimators[0], cfg.estimators[1], cfg.estimators[2]];
    let (g1, g2) = (r.paired_gap(fi, u).unwrap(), r.paired_gap(u, pi).unwrap());
    let mse = |s| r.summary(s).unwrap().mse;
    let pass = g1.z() > GAP_SE && g2.z() > GAP_SE && within(mse(fi), C4_PAPER_FI, C4_BAND);
    outcome(
        pass,
        format!(
            "FI {:.5} < U {:.5} < PI {:.5}; gaps {:.1} and {:.1} SE; FI vs printed 0.15017 (+-25%)",
            mse(fi),
            mse(u),
            mse(pi),
            g1.z(),
            g2.z()
        ),
    )
}

fn random_residuals(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<Residual> {
    let len = rng.random_range(2..=max_len);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                Residual::missing()
            } else {
                Residual::observed(rng.random_range(-3.0..3.0))
            }
        })
        .collect()
}

fn two_signed(res: &[Residual]) -> bool {
    res.iter().any(|r| r.z_eps() > 1e-3) && res.iter().any(|r| r.z_eps() < -1e-3)
}

fn bisection_lambda(res: &[Residual]) -> f64 {
    let ze: Vec<f64> = res.iter().map(Residual::z_eps).filter(|v| *v != 0.0).collect();
    let max = ze.iter().cloned().fold(f64::MIN, f64::max);
    let min = ze.iter().cloned().fold(f64::MAX, f64::min);
    let (mut lo, mut hi) = (-1.0 / max, -1.0 / min);
    let g = |l: f64| ze.iter().map(|v| v / (1.0 + l * v)).sum::<f64>();
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    let generic = EstimateOptions {
        use_reductions: false,
        ..EstimateOptions::default()
    };

    // (a) weighted estimator of a(x) y against the mean of a(X) r(X)
    let cfg = config("model = cosine\ntheta = 2\nh = x1*y\nn = 300\nseed = 5\n");
    let ds = generate_dataset(&cfg, &mut cfg.rng(0)).unwrap();
    let m = cfg.model.as_ref();
    let theta = fit_least_squares(&ds, m, &cfg.theta, 100, 1e-12).unwrap().theta;
    let fi = estimate_with(&ds, m, &theta, &cfg.h, Estimator::FiWeighted, None, &generic).unwrap();
    let direct: f64 = ds.rows().map(|(x, _)| x[0] * (theta[0] * x[0]).cos()).sum::<f64>() / ds.len() as f64;
    let a = (fi - direct).abs() <= C5_REDUCTION_REL * direct.abs();
    notes.push(format!("(a) {}", if a { "ok" } else { "MISS" }));

    // (b) least squares splits the empirical second moment
    let cfg = config("model = linear\ntheta = 2\nh = y\nn = 500\nmissing = none\nseed = 6\n");
    let ds = generate_dataset(&cfg, &mut cfg.rng(0)).unwrap();
    let m = cfg.model.as_ref();
    let theta = fit_least_squares(&ds, m, &[0.0], 100, 1e-14).unwrap().theta;
    let res = residuals(m, &theta, &ds).unwrap();
    let n = ds.len() as f64;
    let lhs: f64 = ds.rows().map(|(_, y)| y.unwrap().powi(2)).sum::<f64>() / n;
    let rhs: f64 = ds.rows().map(|(x, _)| (theta[0] * x[0]).powi(2)).sum::<f64>() / n
        + res.iter().map(|r| r.eps * r.eps).sum::<f64>() / n;
    let b = (lhs - rhs).abs() <= C5_OLS_REL * lhs;
    notes.push(format!("(b) {}", if b { "ok" } else { "MISS" }));

    // (c) intercept model: least squares centers the residuals
    let cfg = config("model = linear_intercept\ntheta = 0,2,-1\nh = x1*exp(x1*y)\nn = 200\nseed = 7\n");
    let ds = generate_dataset(&cfg, &mut cfg.rng(0)).unwrap();
    let m = LinearIntercept::new(2);
    let theta = fit_least_squares(&ds, &m, &[0.0; 3], 100, 1e-14).unwrap().theta;
    let res = residuals(&m, &theta, &ds).unwrap();
    let w = solve_lagrange(&res, default_tolerance(&res), DEFAULT_MAX_ITER).unwrap();
    let fw = estimate(&ds, &m, &theta, &cfg.h, Estimator::FiWeighted, None).unwrap();
    let fu = estimate(&ds, &m, &theta, &cfg.h, Estimator::FiUnweighted, None).unwrap();
    let c = w.lambda == 0.0 && fw == fu;
    notes.push(format!("(c) {} (lambda {:e})", if c { "ok" } else { "MISS" }, w.lambda));

    // (d) constraint and total weight on 500 instances
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut d_fail = 0;
    let mut count = 0;
    while count < 500 {
        let res = random_residuals(&mut rng, 60);
        if !two_signed(&res) {
            continue;
        }
        count += 1;
        let tol = default_tolerance(&res);
        let w = solve_lagrange(&res, tol, DEFAULT_MAX_ITER).unwrap();
        let constraint: f64 = res.iter().zip(&w.weights).map(|(r, w)| w * r.z_eps()).sum();
        let total: f64 = w.weights.iter().sum();
        if constraint.abs() > tol || (total - res.len() as f64).abs() > tol {
            d_fail += 1;
        }
    }
    notes.push(format!("(d) {d_fail}/500 violations"));

    // (e) bisection oracle on 200 small instances
    let mut e_fail = 0;
    let mut count = 0;
    while count < 200 {
        let res = random_residuals(&mut rng, 8);
        if !two_signed(&res) {
            continue;
        }
        count += 1;
        let w = solve_lagrange(&res, 1e-13, DEFAULT_MAX_ITER).unwrap();
        let oracle = weights_from_lambda(&res, bisection_lambda(&res)).unwrap();
        let ok = w.status == ElStatus::Solved
            && w.weights
                .iter()
                .zip(&oracle)
                .all(|(a, b)| (a - b).abs() <= C5_ORACLE * b.max(1.0));
        if !ok {
            e_fail += 1;
        }
    }
    notes.push(format!("(e) {e_fail}/200 mismatches"));

    outcome(a && b && c && d_fail == 0 && e_fail == 0, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let cfg = config(&format!(
        "model = linear\ntheta = 2\nh = y\nn = 500\nreps = 1000\nseed = {SEED}\n"
    ));
    let r = run_coverage_study(&cfg, 0.05, None).unwrap();
    outcome(
        (C6_COVERAGE.0..=C6_COVERAGE.1).contains(&r.coverage),
        format!(
            "coverage {:.4} in [0.93, 0.97]; mean width {:.4}; {} clamped",
            r.coverage, r.mean_width, r.clamped
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for model in ["linear", "cosine"] {
        let cfg = config(&format!(
            "model = {model}\ntheta = 2\nh = y\nn = 500\nreps = 500\nseed = {SEED}\n"
        ));
        let r = run_theta_study(&cfg, &[ThetaSource::Ols, ThetaSource::OneStep]).unwrap();
        let ratio = r.mse[1] / r.mse[0];
        pass &= (C7_RATIO.0..=C7_RATIO.1).contains(&ratio) && r.failed == 0;
        notes.push(format!("{model}: MSE ratio one-step/OLS {ratio:.3}"));
    }
    outcome(pass, format!("{} (in [0.85, 1.20])", notes.join("; ")))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let mut failures: Vec<&str> = Vec::new();

    // gradients against central differences
    let models = [
        ("linear", vec![2.0, -1.0]),
        ("linear_intercept", vec![0.5, 2.0, -1.0]),
        ("cosine", vec![2.0]),
    ];
    let mut grad_ok = true;
    for (name, theta) in &models {
        let m = mar_impute::builtin_model(name, mar_impute::model::builtin_dim(name, theta.len()).unwrap()).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = eval_gradient(m.as_ref(), theta, &x).unwrap();
            for k in 0..theta.len() {
                let (mut up, mut dn) = (theta.clone(), theta.clone());
                up[k] += 1e-6;
                dn[k] -= 1e-6;
                let fd = (eval_regression(m.as_ref(), &up, &x).unwrap()
                    - eval_regression(m.as_ref(), &dn, &x).unwrap())
                    / 2e-6;
                grad_ok &= (fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0);
            }
        }
    }
    if !grad_ok {
        failures.push("gradient");
    }

    // the kernel density integrates to the observed fraction; the score is odd for symmetric residuals
    let mut norm_ok = true;
    let mut odd_ok = true;
    for _ in 0..50 {
        let res = random_residuals(&mut rng, 40);
        let obs = res.iter().filter(|r| r.z).count();
        if obs == 0 {
            continue;
        }
        let s = ScoreModel::new(&res, 0.3, 0.0).unwrap();
        let (nodes, weights) = gauss_legendre(20);
        let (lo, width) = (-3.0 - 15.0, 36.0 / 400.0);
        let mut total = 0.0;
        for k in 0..400 {
            let mid = lo + (k as f64 + 0.5) * width;
            for (u, w) in nodes.iter().zip(&weights) {
                total += 0.5 * width * w * s.eval(mid + 0.5 * width * u).f;
            }
        }
        norm_ok &= (total - obs as f64 / res.len() as f64).abs() < 1e-9;

        let sym: Vec<Residual> = res
            .iter()
            .filter(|r| r.z)
            .flat_map(|r| [*r, Residual::observed(-r.eps)])
            .collect();
        if sym.iter().any(|r| r.eps != 0.0) {
            let s = ScoreModel::from_residuals(&sym, &Bandwidths::default()).unwrap();
            let x: f64 = rng.random_range(-4.0..4.0);
            odd_ok &= (s.ell(x) + s.ell(-x)).abs() <= 1e-9 * s.ell(x).abs().max(1.0);
        }
    }
    if !norm_ok {
        failures.push("density normalization");
    }
    if !odd_ok {
        failures.push("score antisymmetry");
    }

    // scale covariance of the multiplier
    let mut scale_ok = true;
    let mut count = 0;
    while count < 100 {
        let res = random_residuals(&mut rng, 30);
        if !two_signed(&res) {
            continue;
        }
        count += 1;
        let c: f64 = rng.random_range(0.01..100.0);
        let scaled: Vec<Residual> = res
            .iter()
            .map(|r| if r.z { Residual::observed(r.eps * c) } else { *r })
            .collect();
        let a = solve_lagrange(&res, 1e-13, DEFAULT_MAX_ITER).unwrap();
        let b = solve_lagrange(&scaled, 1e-13 * c, DEFAULT_MAX_ITER).unwrap();
        scale_ok &= (b.lambda * c - a.lambda).abs() <= 1e-8 * a.lambda.abs().max(1.0);
    }
    if !scale_ok {
        failures.push("lambda scale covariance");
    }

    // shift invariance of the variance and row-order invariance of everything
    let mut shift_ok = true;
    let mut perm_ok = true;
    let cfg = config("model = linear\ntheta = 2\nh = x1*exp(x1*y)\nn = 80\nseed = 9\n");
    let m = cfg.model.as_ref();
    let shifted = parse_expression("x1*exp(x1*y) + 3.5", 1).unwrap();
    for rep in 0..10 {
        let ds = generate_dataset(&cfg, &mut cfg.rng(rep)).unwrap();
        let theta = [2.1];
        let s = score_model_at(&ds, m, &theta, &Bandwidths::default()).unwrap();
        let v0 = variance_general(&ds, m, &theta, &cfg.h, &s).unwrap();
        let v1 = variance_general(&ds, m, &theta, &shifted, &s).unwrap();
        shift_ok &= (v0.variance - v1.variance).abs() <= 1e-8 * v0.variance.max(1.0);

        let order: Vec<usize> = (0..ds.len()).rev().collect();
        let perm = ds.permuted(&order).unwrap();
        let sp = score_model_at(&perm, m, &theta, &Bandwidths::default()).unwrap();
        let vp = variance_general(&perm, m, &theta, &cfg.h, &sp).unwrap();
        perm_ok &= (v0.variance - vp.variance).abs() <= 1e-10 * v0.variance.max(1.0);
        for method in [
            Estimator::FiWeighted,
            Estimator::FiUnweighted,
            Estimator::PartiallyImputed,
        ] {
            let a = estimate(&ds, m, &theta, &cfg.h, method, None).unwrap();
            let b = estimate(&perm, m, &theta, &cfg.h, method, None).unwrap();
            perm_ok &= (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        }
    }
    if !shift_ok {
        failures.push("variance shift invariance");
    }
    if !perm_ok {
        failures.push("permutation invariance");
    }

    // bit reproducibility across thread counts
    let cfg =
        config("model = cosine\ntheta = 2\nh = y^2\nn = 50\nreps = 30\nseed = 4\nestimators = fi_weighted, pi, ipw\n");
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_mse_study(&cfg)).unwrap();
    let b = many.install(|| run_mse_study(&cfg)).unwrap();
    let bits = |r: &mar_impute::simulation::SimulationReport| -> Vec<u64> {
        r.estimates.iter().flatten().map(|v| v.to_bits()).collect()
    };
    if bits(&a) != bits(&b) {
        failures.push("reproducibility");
    }

    // expression display and parse round trip
    let e = Expr::parse(
        "-x1^2 + 3*exp(-y)/(1 - -2.5) + sqrt(abs(cos(x1*y)))",
        Scope::functional(1),
    )
    .unwrap();
    let again = Expr::parse(&e.to_string(), Scope::functional(1)).unwrap();
    let (xs, y) = ([0.3], -0.7);
    if again != e || e.eval(&Env::new(&xs, y)).unwrap() != again.eval(&Env::new(&xs, y)).unwrap() {
        failures.push("expression round trip");
    }

    if failures.is_empty() {
        outcome(
            true,
            "gradients, density normalization, score antisymmetry, lambda scaling, shift and permutation invariance, reproducibility",
        )
    } else {
        outcome(false, format!("failed: {}", failures.join(", ")))
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 8] = [
        (1, "analytic variance, linear", criterion_1),
        (2, "analytic variance, cosine", criterion_2),
        (3, "ordering FI < PI < IPW, mean response tables", criterion_3),
        (4, "ordering FI < U < PI, E x exp(xy)", criterion_4),
        (5, "exact identities", criterion_5),
        (6, "interval coverage", criterion_6),
        (7, "one-step versus least squares", criterion_7),
        (8, "property suites", criterion_8),
    ];
    let mut failed = 0;
    for (k, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {k}: {name} [{secs:.1}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
