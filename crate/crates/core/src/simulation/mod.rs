//! Monte Carlo designs: uniform covariates, additive errors, responses
//! missing at random with a known propensity.

mod study;
mod truth;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Propensity};
use crate::functional::Functional;
use crate::model::SharedModel;
use crate::param::OneStepOptions;

pub use study::{
    run_coverage_study, run_mse_study, run_theta_study, CoverageReport, EstimatorSummary, PairedGap, SimulationReport,
    ThetaReport,
};
pub use truth::true_functional_value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorLaw {
    /// Centered normal with the given standard deviation; zero gives exact responses.
    Normal { sd: f64 },
    /// Student t; `standardized` rescales to unit variance.
    StudentT { dof: f64, standardized: bool },
    /// Standard logistic, variance `pi^2 / 3`.
    Logistic,
}

impl ErrorLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ErrorLaw::Normal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            ErrorLaw::StudentT { dof, standardized } => {
                let t = StudentT::new(dof).expect("validated dof").sample(rng);
                if standardized {
                    t * ((dof - 2.0) / dof).sqrt()
                } else {
                    t
                }
            }
            ErrorLaw::Logistic => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            }
        }
    }

    /// `None` when the variance is infinite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            ErrorLaw::Normal { sd } => Some(sd * sd),
            ErrorLaw::StudentT { standardized: true, .. } => Some(1.0),
            ErrorLaw::StudentT { dof, .. } if dof > 2.0 => Some(dof / (dof - 2.0)),
            ErrorLaw::StudentT { .. } => None,
            ErrorLaw::Logistic => Some(std::f64::consts::PI.powi(2) / 3.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ErrorLaw::Normal { sd } if !(sd >= 0.0 && sd.is_finite()) => {
                Err(Error::InvalidData(format!("normal sd must be non-negative, got {sd}")))
            }
            ErrorLaw::StudentT { dof, standardized } if dof.is_nan() || dof <= 0.0 || (standardized && dof <= 2.0) => {
                Err(Error::InvalidData(format!(
                    "t degrees of freedom {dof} invalid for this law"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ErrorLaw::Normal { sd: 1.0 } => write!(f, "normal"),
            ErrorLaw::Normal { sd } => write!(f, "normal:{sd}"),
            ErrorLaw::StudentT {
                dof,
                standardized: false,
            } => write!(f, "t:{dof}"),
            ErrorLaw::StudentT {
                dof,
                standardized: true,
            } => write!(f, "t:{dof}:standardized"),
            ErrorLaw::Logistic => write!(f, "logistic"),
        }
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    /// `normal`, `normal:<sd>`, `t:<dof>`, `t:<dof>:standardized`, `logistic`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidData(format!("bad number `{v}` in error law `{s}`")))
        };
        let law = match parts.as_slice() {
            ["normal"] => ErrorLaw::Normal { sd: 1.0 },
            ["normal", sd] => ErrorLaw::Normal { sd: num(sd)? },
            ["t", dof] => ErrorLaw::StudentT {
                dof: num(dof)?,
                standardized: false,
            },
            ["t", dof, "standardized"] => ErrorLaw::StudentT {
                dof: num(dof)?,
                standardized: true,
            },
            ["logistic"] => ErrorLaw::Logistic,
            _ => return Err(Error::InvalidData(format!("unknown error law `{s}`"))),
        };
        law.validate()?;
        Ok(law)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Missingness {
    /// `pi(x) = 1 / (1 + exp(-x1))`
    Logistic,
    /// Every response observed.
    Never,
}

impl Missingness {
    pub fn prob(&self, x: &[f64]) -> f64 {
        match self {
            Missingness::Logistic => 1.0 / (1.0 + (-x[0]).exp()),
            Missingness::Never => 1.0,
        }
    }

    /// The true propensity, as handed to the inverse probability estimator.
    pub fn propensity(&self, dim: usize) -> Propensity {
        match self {
            Missingness::Logistic => Propensity::parse("1/(1+exp(-x1))", dim).expect("fixed expression"),
            Missingness::Never => Propensity::one(),
        }
    }
}

impl fmt::Display for Missingness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Missingness::Logistic => "logistic",
            Missingness::Never => "none",
        })
    }
}

impl FromStr for Missingness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logistic" => Ok(Missingness::Logistic),
            "none" | "never" | "always_observed" | "1" => Ok(Missingness::Never),
            other => Err(Error::InvalidData(format!("unknown missingness `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThetaSource {
    Ols,
    OneStep,
    True,
}

impl ThetaSource {
    pub fn label(self) -> &'static str {
        match self {
            ThetaSource::Ols => "ols",
            ThetaSource::OneStep => "onestep",
            ThetaSource::True => "true",
        }
    }
}

impl fmt::Display for ThetaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ThetaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ols" => Ok(ThetaSource::Ols),
            "onestep" | "one_step" => Ok(ThetaSource::OneStep),
            "true" | "fixed" => Ok(ThetaSource::True),
            other => Err(Error::InvalidData(format!("unknown theta source `{other}`"))),
        }
    }
}

/// One column of a study: an estimator and where its parameter comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EstimatorSpec {
    pub method: Estimator,
    pub source: ThetaSource,
}

impl EstimatorSpec {
    pub fn new(method: Estimator, source: ThetaSource) -> Self {
        EstimatorSpec { method, source }
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.method, self.source)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub model_name: String,
    pub model: SharedModel,
    pub theta: Vec<f64>,
    pub errors: ErrorLaw,
    pub missing: Missingness,
    pub h: Functional,
    pub estimators: Vec<EstimatorSpec>,
    /// Source used by coverage studies and by estimator entries without one.
    pub theta_source: ThetaSource,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Overrides the computed value of `E h(X, Y)`.
    pub truth: Option<f64>,
    pub one_step: OneStepOptions,
}

impl SimulationConfig {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidData("reps must be at least 1".into()));
        }
        if self.theta.len() != self.model.n_params() {
            return Err(Error::DimensionMismatch {
                what: "true parameter",
                expected: self.model.n_params(),
                got: self.theta.len(),
            });
        }
        if self.n < self.model.n_params() + 1 {
            return Err(Error::InvalidData(format!(
                "n = {} too small for {} parameters",
                self.n,
                self.model.n_params()
            )));
        }
        if self.h.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "functional covariates",
                expected: self.dim(),
                got: self.h.dim(),
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidData(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        self.errors.validate()
    }

    /// Generator for replication `rep`: the master seed fixes the key, the
    /// replication index selects an independent stream.
    pub fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

/// Draws `n` rows: `X` uniform on `(-1, 1)^d`, `Y = r(theta, X) + eps`,
/// `Z ~ Bernoulli(pi(X))`, and blanks `Y` when `Z = 0`.
pub fn generate_dataset<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<Dataset> {
    let d = cfg.dim();
    let mut ds = Dataset::with_capacity(d, cfg.n)?;
    let mut x = vec![0.0; d];
    for _ in 0..cfg.n {
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let eps = cfg.errors.sample(rng);
        let observed = rng.random::<f64>() < cfg.missing.prob(&x);
        let y = cfg.model.value(&cfg.theta, &x)? + eps;
        ds.push(&x, observed.then_some(y))?;
    }
    Ok(ds)
}

#[cfg(test)]
pub(crate) fn test_config(model: &str, theta: Vec<f64>, h: &str) -> SimulationConfig {
    let model_ref = crate::model::builtin_model(model, 1).unwrap();
    SimulationConfig {
        model_name: model.to_string(),
        model: model_ref,
        theta,
        errors: ErrorLaw::Normal { sd: 1.0 },
        missing: Missingness::Logistic,
        h: crate::functional::parse_expression(h, 1).unwrap(),
        estimators: vec![EstimatorSpec::new(Estimator::FiWeighted, ThetaSource::Ols)],
        theta_source: ThetaSource::Ols,
        n: 100,
        reps: 10,
        seed: 1,
        alpha: 0.05,
        truth: None,
        one_step: OneStepOptions::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_observed_design() {
        let mut cfg = test_config("linear", vec![2.0], "y");
        cfg.missing = Missingness::Never;
        let ds = generate_dataset(&cfg, &mut cfg.rng(0)).unwrap();
        assert_eq!(ds.n_observed(), ds.len());
    }

    #[test]
    fn logistic_propensity_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hits = (0..100_000)
            .filter(|_| rng.random::<f64>() < Missingness::Logistic.prob(&[0.0]))
            .count();
        let frac = hits as f64 / 1e5;
        assert!((0.495..=0.505).contains(&frac), "{frac}");
    }

    #[test]
    fn zero_noise_gives_exact_responses() {
        let mut cfg = test_config("cosine", vec![2.0], "y");
        cfg.errors = ErrorLaw::Normal { sd: 0.0 };
        let ds = generate_dataset(&cfg, &mut cfg.rng(3)).unwrap();
        for (x, y) in ds.rows() {
            if let Some(y) = y {
                assert_eq!(y, (2.0 * x[0]).cos());
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let cfg = test_config("linear", vec![2.0], "y");
        let a = generate_dataset(&cfg, &mut cfg.rng(4)).unwrap();
        let b = generate_dataset(&cfg, &mut cfg.rng(4)).unwrap();
        let c = generate_dataset(&cfg, &mut cfg.rng(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn error_law_syntax() {
        assert_eq!(
            "t:10".parse::<ErrorLaw>().unwrap(),
            ErrorLaw::StudentT {
                dof: 10.0,
                standardized: false
            }
        );
        assert_eq!("normal:0".parse::<ErrorLaw>().unwrap(), ErrorLaw::Normal { sd: 0.0 });
        for law in ["normal", "normal:0.5", "t:10", "t:10:standardized", "logistic"] {
            assert_eq!(law.parse::<ErrorLaw>().unwrap().to_string(), law);
        }
        assert!("t:2:standardized".parse::<ErrorLaw>().is_err());
        assert!("cauchy".parse::<ErrorLaw>().is_err());
        assert_eq!(
            ErrorLaw::StudentT {
                dof: 10.0,
                standardized: false
            }
            .variance(),
            Some(1.25)
        );
    }

    #[test]
    fn standardized_t_has_unit_variance() {
        let law = ErrorLaw::StudentT {
            dof: 10.0,
            standardized: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let v = (0..n).map(|_| law.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 1.0).abs() < 0.03, "{v}");
    }
}
