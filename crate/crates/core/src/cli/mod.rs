//! Command line front end: `estimate`, `simulate` and `coverage`.

pub mod config;
pub mod csv;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimators::{estimate_prepared, EstimateOptions, Estimator, Imputation, Propensity};
use crate::functional::parse_expression;
use crate::inference::{estimate_with_interval, score_model_at};
use crate::model::{builtin_model, CustomModel, SharedModel};
use crate::param::{efficient_theta, fit_least_squares, Bandwidths, OneStepOptions, ThetaEstimate};
use crate::simulation::{run_coverage_study, run_mse_study};

pub use self::config::{parse_config, RawConfig};
pub use self::csv::{load_csv, parse_csv};

pub const THREADS_ENV: &str = "MAR_IMPUTE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "mar-impute",
    version,
    about = "Imputation estimators of E h(X, Y) with responses missing at random"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate E h(X, Y) from a CSV file with columns x1..xd,y,z.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo mean squared error study from a config file.
    Simulate(StudyArgs),
    /// Run a confidence interval coverage study from a config file.
    Coverage(StudyArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Regression model: linear, linear_intercept, cosine or custom.
    #[arg(long)]
    model: String,
    /// Functional h(x, y) in the expression language.
    #[arg(long)]
    h: String,
    /// Comma separated estimators.
    #[arg(long, default_value = "fi_weighted")]
    method: String,
    /// ols, onestep, or fixed:<v1,v2,...>.
    #[arg(long, default_value = "ols")]
    theta_source: String,
    /// Starting point for iterative fits (default: all ones).
    #[arg(long)]
    theta0: Option<String>,
    /// Propensity: an expression in x1..xd, or `fitted` for a logistic fit.
    #[arg(long)]
    pi: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Mean function of a custom model, in x1..xd and t1..tp.
    #[arg(long)]
    custom_r: Option<String>,
    /// Partial derivatives of a custom model, separated by `;`.
    #[arg(long)]
    custom_grad: Option<String>,
    #[arg(long)]
    score_a_factor: Option<f64>,
    #[arg(long)]
    score_b_exponent: Option<f64>,
    data: PathBuf,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Also print one comma separated record per estimator.
    #[arg(long)]
    records: bool,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    config: PathBuf,
}

/// Runs the tool and returns its exit code: 0 on success, 2 for I/O,
/// 3 for parse and usage, 4 for numerical failures.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(err, "E_PARSE: {}", first.trim_start_matches("error: "));
            return 3;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(err, "{}: {e}", e.class().prefix());
        return e.class().exit_code();
    }
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Coverage(a) => cmd_coverage(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            let _ = writeln!(err, "{}: {}", e.class().prefix(), one_line(&e.to_string()));
            e.class().exit_code()
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidData(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a pool may already exist when called repeatedly in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Six significant digits, fixed notation for moderate magnitudes.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // rounding can carry into a new digit, e.g. 9.999995
        let digits = s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len();
        if digits > 6 && decimals > 0 {
            let d = decimals - 1;
            return format!("{v:.d$}");
        }
        s
    } else {
        format!("{v:.5e}")
    }
}

fn parse_theta_source(s: &str) -> Result<ThetaChoice> {
    match s.trim() {
        "ols" => Ok(ThetaChoice::Ols),
        "onestep" | "one_step" => Ok(ThetaChoice::OneStep),
        other => match other.strip_prefix("fixed:") {
            Some(list) => Ok(ThetaChoice::Fixed(config::parse_list(list)?)),
            None => Err(Error::InvalidData(format!(
                "theta source must be ols, onestep or fixed:<values>, got `{other}`"
            ))),
        },
    }
}

enum ThetaChoice {
    Ols,
    OneStep,
    Fixed(Vec<f64>),
}

fn build_model(a: &EstimateArgs, dim: usize) -> Result<SharedModel> {
    if a.model == "custom" {
        let r = a
            .custom_r
            .as_deref()
            .ok_or_else(|| Error::InvalidData("--model custom needs --custom-r".into()))?;
        let g = a
            .custom_grad
            .as_deref()
            .ok_or_else(|| Error::InvalidData("--model custom needs --custom-grad".into()))?;
        let partials: Vec<&str> = g.split(';').map(str::trim).collect();
        Ok(Arc::new(CustomModel::new(dim, r, &partials)?))
    } else {
        builtin_model(&a.model, dim)
    }
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    // flags first, so usage mistakes are reported before any file access
    let methods = a
        .method
        .split(',')
        .map(|m| m.parse::<Estimator>())
        .collect::<Result<Vec<_>>>()?;
    if methods.contains(&Estimator::IpwNaive) && a.pi.is_none() {
        return Err(Error::InvalidData("--method ipw requires --pi".into()));
    }
    let choice = parse_theta_source(&a.theta_source)?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Error::InvalidData(format!(
            "--alpha must lie in (0, 1), got {}",
            a.alpha
        )));
    }

    let ds = load_csv(&a.data)?;
    let model = build_model(a, ds.dim())?;
    let h = parse_expression(&a.h, ds.dim())?;
    let propensity = match a.pi.as_deref() {
        None => None,
        Some("fitted") => Some(Propensity::fit_logistic(&ds)?),
        Some(src) => Some(Propensity::parse(src, ds.dim())?),
    };
    let defaults = Bandwidths::default();
    let bandwidths = Bandwidths {
        a_factor: a.score_a_factor.unwrap_or(defaults.a_factor),
        b_exponent: a.score_b_exponent.unwrap_or(defaults.b_exponent),
        ..defaults
    };
    let opts = OneStepOptions {
        bandwidths,
        ..OneStepOptions::default()
    };
    let theta0 = match &a.theta0 {
        Some(s) => config::parse_list(s)?,
        None => vec![1.0; model.n_params()],
    };
    let fit: ThetaEstimate = match choice {
        ThetaChoice::Ols => fit_least_squares(&ds, model.as_ref(), &theta0, opts.max_iter, opts.tol)?,
        ThetaChoice::OneStep => efficient_theta(&ds, model.as_ref(), &theta0, &opts)?,
        ThetaChoice::Fixed(t) => {
            if t.len() != model.n_params() {
                return Err(Error::DimensionMismatch {
                    what: "fixed parameter",
                    expected: model.n_params(),
                    got: t.len(),
                });
            }
            ThetaEstimate::fixed(t)
        }
    };
    let theta = fit.theta.clone();

    let header = [
        ("command", "estimate".to_string()),
        ("data", a.data.display().to_string()),
        ("model", a.model.clone()),
        ("h", h.source().to_string()),
        ("form", h.form().tag().to_string()),
        ("method", a.method.clone()),
        ("theta_source", a.theta_source.clone()),
        ("pi", a.pi.clone().unwrap_or_else(|| "none".into())),
        ("alpha", a.alpha.to_string()),
        ("score_a_factor", bandwidths.a_factor.to_string()),
        ("score_b_exponent", bandwidths.b_exponent.to_string()),
        ("n", ds.len().to_string()),
        ("observed", ds.n_observed().to_string()),
    ];
    for (k, v) in header {
        writeln!(out, "# {k} = {v}")?;
    }
    let join = |v: &[f64]| v.iter().map(|x| fmt_sig(*x)).collect::<Vec<_>>().join(",");
    writeln!(out, "theta = {}", join(&theta))?;
    if let Some(p) = &fit.preliminary {
        writeln!(out, "theta_preliminary = {}", join(p))?;
    }
    if !fit.converged {
        writeln!(out, "# warning: least squares did not converge")?;
    }

    let imp = Imputation::new(&ds, model.as_ref(), &theta)?;
    writeln!(
        out,
        "{:<20} {:>14} {:>14} {:>14} {:>14}",
        "method", "estimate", "variance", "ci_low", "ci_high"
    )?;
    for &m in &methods {
        if m == Estimator::FiWeighted {
            let s = score_model_at(&ds, model.as_ref(), &theta, &bandwidths)?;
            let fe = estimate_with_interval(&ds, model.as_ref(), &theta, &h, &s, a.alpha)?;
            writeln!(
                out,
                "{:<20} {:>14} {:>14} {:>14} {:>14}",
                m.label(),
                fmt_sig(fe.value),
                fmt_sig(fe.variance),
                fmt_sig(fe.ci_low),
                fmt_sig(fe.ci_high)
            )?;
            if fe.components.clamped {
                writeln!(out, "# warning: negative variance estimate clamped to zero")?;
            }
        } else {
            let v = estimate_prepared(&imp, &h, m, propensity.as_ref(), &EstimateOptions::default())?;
            writeln!(
                out,
                "{:<20} {:>14} {:>14} {:>14} {:>14}",
                m.label(),
                fmt_sig(v),
                "-",
                "-",
                "-"
            )?;
        }
    }
    Ok(())
}

fn load_study(a: &StudyArgs, out: &mut dyn Write, command: &str) -> Result<crate::simulation::SimulationConfig> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut raw = RawConfig::parse(&text)?;
    if let Some(r) = a.reps {
        raw.set("reps", r.to_string());
    }
    if let Some(s) = a.seed {
        raw.set("seed", s.to_string());
    }
    if let Some(n) = a.n {
        raw.set("n", n.to_string());
    }
    if let Some(al) = a.alpha {
        raw.set("alpha", al.to_string());
    }
    let cfg = raw.resolve()?;
    writeln!(out, "# command = {command}")?;
    writeln!(out, "# config = {}", a.config.display())?;
    for (k, v) in config::echo(&cfg) {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(cfg)
}

fn cmd_simulate(a: &StudyArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_study(a, out, "simulate")?;
    let report = run_mse_study(&cfg)?;
    writeln!(out, "# truth_value = {}", fmt_sig(report.truth))?;
    writeln!(out, "# failed_replications = {}", report.failed)?;
    writeln!(
        out,
        "{:<28} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "estimator", "n", "reps", "mse", "bias", "variance", "mc_se"
    )?;
    for s in &report.summaries {
        writeln!(
            out,
            "{:<28} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
            s.spec.label(),
            cfg.n,
            cfg.reps,
            fmt_sig(s.mse),
            fmt_sig(s.bias),
            fmt_sig(s.variance),
            fmt_sig(s.mc_se)
        )?;
    }
    if a.records {
        writeln!(out)?;
        writeln!(out, "estimator,n,reps,seed,mse,bias,variance,mc_se")?;
        for s in &report.summaries {
            writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e},{:e}",
                s.spec.label(),
                cfg.n,
                cfg.reps,
                cfg.seed,
                s.mse,
                s.bias,
                s.variance,
                s.mc_se
            )?;
        }
    }
    Ok(())
}

fn cmd_coverage(a: &StudyArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_study(a, out, "coverage")?;
    let r = run_coverage_study(&cfg, cfg.alpha, None)?;
    writeln!(out, "# truth_value = {}", fmt_sig(r.truth))?;
    writeln!(out, "# failed_replications = {}", r.failed)?;
    writeln!(out, "coverage = {}", fmt_sig(r.coverage))?;
    writeln!(out, "nominal = {}", fmt_sig(1.0 - r.alpha))?;
    writeln!(out, "mean_width = {}", fmt_sig(r.mean_width))?;
    writeln!(out, "mean_variance = {}", fmt_sig(r.mean_variance))?;
    writeln!(out, "clamped = {}", r.clamped)?;
    if a.records {
        writeln!(out)?;
        writeln!(out, "n,reps,seed,alpha,coverage,mean_width,mean_variance")?;
        writeln!(
            out,
            "{},{},{},{},{:e},{:e},{:e}",
            cfg.n, cfg.reps, cfg.seed, r.alpha, r.coverage, r.mean_width, r.mean_variance
        )?;
    }
    Ok(())
}
