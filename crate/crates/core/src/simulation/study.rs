use rayon::prelude::*;

use super::{generate_dataset, true_functional_value, EstimatorSpec, SimulationConfig, ThetaSource};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_prepared, EstimateOptions, Imputation};
use crate::inference::{confidence_interval, score_model_at, variance_general};
use crate::numeric;
use crate::param::{efficient_theta, fit_least_squares};

/// Studies fail when more than this fraction of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub spec: EstimatorSpec,
    pub mse: f64,
    pub bias: f64,
    /// Spread of the estimates around their mean (divisor `R`).
    pub variance: f64,
    /// Standard error of `mse`, from the per-replication squared errors.
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub truth: f64,
    pub reps: usize,
    pub failed: usize,
    pub first_failure: Option<String>,
    pub summaries: Vec<EstimatorSummary>,
    /// `estimates[k][r]`: estimator `k` on successful replication `r`.
    pub estimates: Vec<Vec<f64>>,
}

/// Mean difference of squared errors between two estimators on the same
/// replications, with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedGap {
    pub diff: f64,
    pub se: f64,
}

impl PairedGap {
    /// Gap in standard errors (positive when the second estimator is worse).
    pub fn z(&self) -> f64 {
        self.diff / self.se
    }
}

impl SimulationReport {
    pub fn index_of(&self, spec: EstimatorSpec) -> Option<usize> {
        self.summaries.iter().position(|s| s.spec == spec)
    }

    pub fn summary(&self, spec: EstimatorSpec) -> Option<&EstimatorSummary> {
        self.index_of(spec).map(|k| &self.summaries[k])
    }

    /// `MSE(b) - MSE(a)` with the standard error of the paired differences.
    pub fn paired_gap(&self, a: EstimatorSpec, b: EstimatorSpec) -> Option<PairedGap> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        let d: Vec<f64> = self.estimates[ia]
            .iter()
            .zip(&self.estimates[ib])
            .map(|(x, y)| (y - self.truth).powi(2) - (x - self.truth).powi(2))
            .collect();
        let (mean, var) = mean_var(&d);
        Some(PairedGap {
            diff: mean,
            se: (var / d.len() as f64).sqrt(),
        })
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = numeric::sum(v.iter().copied()) / n;
    let var = numeric::sum(v.iter().map(|x| (x - mean) * (x - mean))) / n;
    (mean, var)
}

fn theta_for(cfg: &SimulationConfig, ds: &Dataset, source: ThetaSource) -> Result<Vec<f64>> {
    // iterative fits start from the true parameter
    Ok(match source {
        ThetaSource::True => cfg.theta.clone(),
        ThetaSource::Ols => {
            let fit = fit_least_squares(
                ds,
                cfg.model.as_ref(),
                &cfg.theta,
                cfg.one_step.max_iter,
                cfg.one_step.tol,
            )?;
            if !fit.converged {
                return Err(Error::Domain("least squares did not converge".into()));
            }
            fit.theta
        }
        ThetaSource::OneStep => efficient_theta(ds, cfg.model.as_ref(), &cfg.theta, &cfg.one_step)?.theta,
    })
}

fn one_replication(cfg: &SimulationConfig, rep: usize) -> Result<Vec<f64>> {
    let ds = generate_dataset(cfg, &mut cfg.rng(rep))?;
    let propensity = cfg.missing.propensity(cfg.dim());
    let opts = EstimateOptions::default();
    let mut sources: Vec<ThetaSource> = Vec::new();
    for spec in &cfg.estimators {
        if !sources.contains(&spec.source) {
            sources.push(spec.source);
        }
    }
    let thetas = sources
        .iter()
        .map(|&s| theta_for(cfg, &ds, s))
        .collect::<Result<Vec<_>>>()?;
    let imputations = thetas
        .iter()
        .map(|t| Imputation::new(&ds, cfg.model.as_ref(), t))
        .collect::<Result<Vec<_>>>()?;
    cfg.estimators
        .iter()
        .map(|spec| {
            let k = sources.iter().position(|&s| s == spec.source).expect("collected above");
            estimate_prepared(&imputations[k], &cfg.h, spec.method, Some(&propensity), &opts)
        })
        .collect()
}

/// Collects per-replication results in index order and enforces the failure limit.
fn gather<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize, Option<String>)> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * total as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures {
            failed,
            total,
            first: first.unwrap_or_default(),
        });
    }
    Ok((ok, failed, first))
}

/// Simulated mean squared errors of every configured estimator.
pub fn run_mse_study(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.estimators.is_empty() {
        return Err(Error::InvalidData("no estimators configured".into()));
    }
    let truth = true_functional_value(cfg)?;
    let results: Vec<Result<Vec<f64>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| one_replication(cfg, rep))
        .collect();
    let (rows, failed, first_failure) = gather(results)?;

    let estimates: Vec<Vec<f64>> = (0..cfg.estimators.len())
        .map(|k| rows.iter().map(|r| r[k]).collect())
        .collect();
    let summaries = cfg
        .estimators
        .iter()
        .zip(&estimates)
        .map(|(&spec, est)| {
            let sq: Vec<f64> = est.iter().map(|e| (e - truth) * (e - truth)).collect();
            let (mse, sq_var) = mean_var(&sq);
            let (mean, variance) = mean_var(est);
            EstimatorSummary {
                spec,
                mse,
                bias: mean - truth,
                variance,
                mc_se: (sq_var / sq.len() as f64).sqrt(),
            }
        })
        .collect();
    Ok(SimulationReport {
        truth,
        reps: cfg.reps,
        failed,
        first_failure,
        summaries,
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub truth: f64,
    pub alpha: f64,
    pub reps: usize,
    pub failed: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub mean_variance: f64,
    pub clamped: usize,
}

/// Fraction of replications whose interval for the weighted fully imputed
/// estimator covers the truth. `variance_override` replaces the plug-in
/// variance (a test hook).
pub fn run_coverage_study(
    cfg: &SimulationConfig,
    alpha: f64,
    variance_override: Option<f64>,
) -> Result<CoverageReport> {
    cfg.validate()?;
    let truth = true_functional_value(cfg)?;
    let results: Vec<Result<(bool, f64, f64, bool)>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let ds = generate_dataset(cfg, &mut cfg.rng(rep))?;
            let theta = theta_for(cfg, &ds, cfg.theta_source)?;
            let s = score_model_at(&ds, cfg.model.as_ref(), &theta, &cfg.one_step.bandwidths)?;
            let v = variance_general(&ds, cfg.model.as_ref(), &theta, &cfg.h, &s)?;
            let variance = variance_override.unwrap_or(v.variance);
            let (lo, hi) = confidence_interval(v.value, variance, ds.len(), alpha)?;
            Ok((lo <= truth && truth <= hi, hi - lo, variance, v.clamped))
        })
        .collect();
    let (rows, failed, _) = gather(results)?;
    let k = rows.len() as f64;
    Ok(CoverageReport {
        truth,
        alpha,
        reps: cfg.reps,
        failed,
        coverage: rows.iter().filter(|r| r.0).count() as f64 / k,
        mean_width: numeric::sum(rows.iter().map(|r| r.1)) / k,
        mean_variance: numeric::sum(rows.iter().map(|r| r.2)) / k,
        clamped: rows.iter().filter(|r| r.3).count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaReport {
    pub sources: Vec<ThetaSource>,
    /// `estimates[k][r]`: parameter vector from source `k` on replication `r`.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// `mse[k]`: summed over coordinates.
    pub mse: Vec<f64>,
    pub failed: usize,
}

impl ThetaReport {
    /// Squared errors per replication, summed over coordinates.
    pub fn squared_errors(&self, k: usize, truth: &[f64]) -> Vec<f64> {
        self.estimates[k]
            .iter()
            .map(|t| t.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    }
}

/// Mean squared errors of parameter estimates from several sources.
pub fn run_theta_study(cfg: &SimulationConfig, sources: &[ThetaSource]) -> Result<ThetaReport> {
    cfg.validate()?;
    let results: Vec<Result<Vec<Vec<f64>>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let ds = generate_dataset(cfg, &mut cfg.rng(rep))?;
            sources.iter().map(|&s| theta_for(cfg, &ds, s)).collect()
        })
        .collect();
    let (rows, failed, _) = gather(results)?;
    let estimates: Vec<Vec<Vec<f64>>> = (0..sources.len())
        .map(|k| rows.iter().map(|r| r[k].clone()).collect())
        .collect();
    let mut report = ThetaReport {
        sources: sources.to_vec(),
        estimates,
        mse: Vec::new(),
        failed,
    };
    report.mse = (0..sources.len())
        .map(|k| {
            let sq = report.squared_errors(k, &cfg.theta);
            numeric::sum(sq.iter().copied()) / sq.len() as f64
        })
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Estimator;
    use crate::simulation::{test_config, ErrorLaw, Missingness};

    #[test]
    fn zero_noise_true_theta_is_exact() {
        let mut cfg = test_config("linear", vec![2.0], "y");
        cfg.errors = ErrorLaw::Normal { sd: 0.0 };
        cfg.estimators = [
            Estimator::FiWeighted,
            Estimator::FiUnweighted,
            Estimator::PartiallyImputed,
        ]
        .into_iter()
        .map(|m| EstimatorSpec::new(m, ThetaSource::True))
        .collect();
        let report = run_mse_study(&cfg).unwrap();
        for s in &report.summaries {
            // imputation of EY averages r(X_i), whose mean is not exactly zero
            let ds_means: f64 = (0..cfg.reps)
                .map(|rep| {
                    let ds = generate_dataset(&cfg, &mut cfg.rng(rep)).unwrap();
                    let m = ds.rows().map(|(x, _)| 2.0 * x[0]).sum::<f64>() / ds.len() as f64;
                    m * m
                })
                .sum::<f64>()
                / cfg.reps as f64;
            assert!((s.mse - ds_means).abs() < 1e-12, "{}", s.spec.label());
        }
    }

    #[test]
    fn mse_decomposition_and_reproducibility() {
        let mut cfg = test_config("linear", vec![2.0], "y");
        cfg.estimators = vec![
            EstimatorSpec::new(Estimator::FiWeighted, ThetaSource::Ols),
            EstimatorSpec::new(Estimator::IpwNaive, ThetaSource::Ols),
        ];
        cfg.reps = 30;
        let a = run_mse_study(&cfg).unwrap();
        let b = run_mse_study(&cfg).unwrap();
        assert_eq!(a, b);
        for s in &a.summaries {
            assert!((s.mse - (s.bias * s.bias + s.variance)).abs() <= 1e-12 * s.mse);
        }
        let gap = a.paired_gap(cfg.estimators[0], cfg.estimators[1]).unwrap();
        assert!((gap.diff - (a.summaries[1].mse - a.summaries[0].mse)).abs() < 1e-12);
    }

    #[test]
    fn huge_variance_always_covers() {
        let mut cfg = test_config("linear", vec![2.0], "y");
        cfg.reps = 20;
        let r = run_coverage_study(&cfg, 0.05, Some(1e12)).unwrap();
        assert_eq!(r.coverage, 1.0);
    }

    #[test]
    fn failures_are_counted() {
        let mut cfg = test_config("linear", vec![2.0], "log(y)");
        cfg.missing = Missingness::Never;
        cfg.truth = Some(0.0);
        cfg.reps = 5;
        assert!(matches!(run_mse_study(&cfg), Err(Error::TooManyFailures { .. })));
    }

    #[test]
    fn theta_study_sources() {
        let mut cfg = test_config("linear", vec![2.0], "y");
        cfg.reps = 8;
        let r = run_theta_study(&cfg, &[ThetaSource::Ols, ThetaSource::True]).unwrap();
        assert_eq!(r.mse[1], 0.0);
        assert!(r.mse[0] > 0.0);
    }
}
