//! Point estimators of `E h(X, Y)`.
//!
//! The fully imputed estimators average the imputed conditional expectation
//!
//! ```text
//! chi(x) = sum_j w_j Z_j h(x, r(x) + eps_j) / sum_j Z_j
//! ```
//!
//! over all rows, observed or not. With empirical likelihood weights this is
//! the efficient estimator; with unit weights it is the plain fully imputed
//! one. Note the denominator is `sum_j Z_j`, not `sum_j w_j Z_j`.
//!
//! For `h = a(x) y` and `h = y^2` the inner sum collapses algebraically to a
//! handful of weighted residual moments, which turns the `O(n^2)` double sum
//! into `O(n)`. Those reductions are exact for any weights and are used
//! automatically unless disabled through [`EstimateOptions`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{Dataset, Residual};
use crate::el::{self, ElWeights};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Scope};
use crate::functional::{Functional, FunctionalForm};
use crate::model::{residuals, RegressionModel};
use crate::numeric::{self, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Fully imputed, empirical likelihood weighted (the efficient estimator).
    FiWeighted,
    /// Fully imputed with unit weights.
    FiUnweighted,
    /// Observed `h(X, Y)` where available, unweighted imputation elsewhere.
    PartiallyImputed,
    /// Partially imputed with the weighted imputation. For `h = y` this
    /// imputes `r(X)` itself, the form used in the mean response tables.
    PartiallyImputedWeighted,
    /// `n^-1 sum Z h(X, Y) / pi(X)`.
    IpwNaive,
    /// `n^-1 sum a(X) r(X)`, valid for `h = a(x) y`.
    MeanResponseFast,
    /// `n^-1 sum r(X)^2 + sum w Z eps^2 / sum Z`, valid for `h = y^2`.
    SecondMomentFast,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::FiWeighted,
        Estimator::FiUnweighted,
        Estimator::PartiallyImputed,
        Estimator::PartiallyImputedWeighted,
        Estimator::IpwNaive,
        Estimator::MeanResponseFast,
        Estimator::SecondMomentFast,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::FiWeighted => "fi_weighted",
            Estimator::FiUnweighted => "fi_unweighted",
            Estimator::PartiallyImputed => "pi",
            Estimator::PartiallyImputedWeighted => "pi_weighted",
            Estimator::IpwNaive => "ipw",
            Estimator::MeanResponseFast => "mean_fast",
            Estimator::SecondMomentFast => "second_moment_fast",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "fi_weighted" | "fi" => Estimator::FiWeighted,
            "fi_unweighted" | "u" => Estimator::FiUnweighted,
            "pi" | "partially_imputed" => Estimator::PartiallyImputed,
            "pi_weighted" => Estimator::PartiallyImputedWeighted,
            "ipw" | "ipw_naive" | "n" => Estimator::IpwNaive,
            "mean_fast" | "mean_response_fast" => Estimator::MeanResponseFast,
            "second_moment_fast" => Estimator::SecondMomentFast,
            other => return Err(Error::Unsupported(format!("unknown estimator `{other}`"))),
        })
    }
}

/// Probability of observing the response given the covariates.
#[derive(Debug, Clone)]
pub enum Propensity {
    /// Known function of the covariates.
    Known(Expr),
    /// Logistic regression of `Z` on `(1, x)`, fitted by Newton–Raphson.
    /// Not part of the efficient method; provided as a convenience.
    Logistic { coefficients: Vec<f64> },
}

impl Propensity {
    pub fn parse(src: &str, dim: usize) -> Result<Propensity> {
        Ok(Propensity::Known(Expr::parse(src, Scope::covariates(dim))?))
    }

    /// The always-observed design, `pi = 1`.
    pub fn one() -> Propensity {
        Propensity::Known(Expr::Num(1.0))
    }

    pub fn prob(&self, x: &[f64]) -> Result<f64> {
        let p = match self {
            Propensity::Known(e) => e.eval(&Env::new(x, 0.0))?,
            Propensity::Logistic { coefficients } => {
                let eta = coefficients[0] + coefficients[1..].iter().zip(x).map(|(b, x)| b * x).sum::<f64>();
                1.0 / (1.0 + (-eta).exp())
            }
        };
        if p > 0.0 && p <= 1.0 {
            Ok(p)
        } else {
            Err(Error::Domain(format!("propensity {p} outside (0, 1]")))
        }
    }

    pub fn fit_logistic(ds: &Dataset) -> Result<Propensity> {
        let d = ds.dim() + 1;
        let mut beta = DVector::<f64>::zeros(d);
        for _ in 0..100 {
            let mut info = DMatrix::<f64>::zeros(d, d);
            let mut score = DVector::<f64>::zeros(d);
            let mut design = vec![1.0; d];
            for (x, y) in ds.rows() {
                design[1..].copy_from_slice(x);
                let eta: f64 = design.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
                let p = 1.0 / (1.0 + (-eta).exp());
                let z = if y.is_some() { 1.0 } else { 0.0 };
                for a in 0..d {
                    score[a] += (z - p) * design[a];
                    for b in 0..d {
                        info[(a, b)] += p * (1.0 - p) * design[a] * design[b];
                    }
                }
            }
            let step = numeric::solve_spd(&info, &score, 1e12)?;
            beta += &step;
            if step.norm() < 1e-10 * (1.0 + beta.norm()) {
                return Ok(Propensity::Logistic {
                    coefficients: beta.iter().copied().collect(),
                });
            }
        }
        Err(Error::Domain(
            "logistic propensity fit did not converge (separable data?)".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    /// Use the exact algebraic collapse of the double sum for tagged functionals.
    pub use_reductions: bool,
    /// Empirical likelihood tolerance; `None` picks the residual-scaled default.
    pub el_tolerance: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            use_reductions: true,
            el_tolerance: None,
        }
    }
}

/// Fitted values and residuals of a model at a fixed parameter.
pub struct Imputation<'a> {
    ds: &'a Dataset,
    model: &'a dyn RegressionModel,
    theta: Vec<f64>,
    fitted: Vec<f64>,
    residuals: Vec<Residual>,
    observed: Vec<usize>,
}

/// `(sum Z)^-1 sum w Z {1, eps, eps^2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMoments {
    pub sw: f64,
    pub swe: f64,
    pub sw2: f64,
}

impl<'a> Imputation<'a> {
    pub fn new(ds: &'a Dataset, model: &'a dyn RegressionModel, theta: &[f64]) -> Result<Self> {
        ds.require_observed()?;
        let residuals = residuals(model, theta, ds)?;
        let fitted = ds
            .rows()
            .map(|(x, _)| model.value(theta, x))
            .collect::<Result<Vec<_>>>()?;
        let observed = (0..ds.len()).filter(|&i| ds.observed(i)).collect();
        Ok(Imputation {
            ds,
            model,
            theta: theta.to_vec(),
            fitted,
            residuals,
            observed,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.ds
    }

    pub fn model(&self) -> &dyn RegressionModel {
        self.model
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n(&self) -> usize {
        self.ds.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn residuals(&self) -> &[Residual] {
        &self.residuals
    }

    pub fn observed_rows(&self) -> &[usize] {
        &self.observed
    }

    pub fn el_weights(&self, tolerance: Option<f64>) -> Result<ElWeights> {
        let tol = tolerance.unwrap_or_else(|| el::default_tolerance(&self.residuals));
        el::solve_lagrange(&self.residuals, tol, el::DEFAULT_MAX_ITER)
    }

    pub fn moments(&self, weights: &[f64]) -> WeightMoments {
        let mut sw = CompensatedSum::new();
        let mut swe = CompensatedSum::new();
        let mut sw2 = CompensatedSum::new();
        for &j in &self.observed {
            let w = weights[j];
            let e = self.residuals[j].eps;
            sw.add(w);
            swe.add(w * e);
            sw2.add(w * e * e);
        }
        let k = self.observed.len() as f64;
        WeightMoments {
            sw: sw.value() / k,
            swe: swe.value() / k,
            sw2: sw2.value() / k,
        }
    }

    /// Binds a functional, precomputing whatever its algebraic form allows.
    pub fn prepare<'i>(&'i self, h: &'i Functional, use_reductions: bool) -> Result<Prepared<'i, 'a>> {
        if h.dim() != self.ds.dim() {
            return Err(Error::DimensionMismatch {
                what: "functional covariates",
                expected: self.ds.dim(),
                got: h.dim(),
            });
        }
        let n = self.n() as f64;
        let reduced = match (use_reductions, h.form()) {
            (true, FunctionalForm::PureResponseLinear { .. }) => {
                let a = self
                    .ds
                    .rows()
                    .map(|(x, _)| h.coefficient(x).expect("tagged functional"))
                    .collect::<Result<Vec<_>>>()?;
                let mean_a = numeric::sum(a.iter().copied()) / n;
                let mean_ar = numeric::sum(a.iter().zip(&self.fitted).map(|(a, r)| a * r)) / n;
                Reduced::Linear { a, mean_a, mean_ar }
            }
            (true, FunctionalForm::SecondMoment) => Reduced::Square {
                mean_r: numeric::sum(self.fitted.iter().copied()) / n,
                mean_r2: numeric::sum(self.fitted.iter().map(|r| r * r)) / n,
            },
            _ => Reduced::None,
        };
        Ok(Prepared { imp: self, h, reduced })
    }
}

enum Reduced {
    Linear { a: Vec<f64>, mean_a: f64, mean_ar: f64 },
    Square { mean_r: f64, mean_r2: f64 },
    None,
}

/// An [`Imputation`] bound to one functional.
pub struct Prepared<'i, 'a> {
    imp: &'i Imputation<'a>,
    h: &'i Functional,
    reduced: Reduced,
}

impl Prepared<'_, '_> {
    pub fn imputation(&self) -> &Imputation<'_> {
        self.imp
    }

    /// Imputed conditional expectation at an arbitrary covariate `x` with
    /// fitted value `fitted = r(x)`.
    pub fn chi_at(&self, x: &[f64], fitted: f64, weights: &[f64], m: &WeightMoments) -> Result<f64> {
        match &self.reduced {
            Reduced::Linear { .. } => {
                let a = self.h.coefficient(x).expect("tagged functional")?;
                Ok(a * (fitted * m.sw + m.swe))
            }
            _ => self.chi_generic(x, fitted, weights, m),
        }
    }

    fn chi_generic(&self, x: &[f64], fitted: f64, weights: &[f64], m: &WeightMoments) -> Result<f64> {
        if let Reduced::Square { .. } = self.reduced {
            return Ok(fitted * fitted * m.sw + 2.0 * fitted * m.swe + m.sw2);
        }
        let mut acc = CompensatedSum::new();
        for &j in &self.imp.observed {
            let e = self.imp.residuals[j].eps;
            acc.add(weights[j] * self.h.eval_unchecked(x, fitted + e)?);
        }
        Ok(acc.value() / self.imp.observed.len() as f64)
    }

    /// Imputed value at row `i` of the dataset.
    pub fn chi(&self, i: usize, weights: &[f64], m: &WeightMoments) -> Result<f64> {
        let fitted = self.imp.fitted[i];
        match &self.reduced {
            Reduced::Linear { a, .. } => Ok(a[i] * (fitted * m.sw + m.swe)),
            _ => self.chi_generic(self.imp.ds.x(i), fitted, weights, m),
        }
    }

    /// Imputed values at every row, computed in parallel; the result does not
    /// depend on how rows are partitioned.
    pub fn chi_all(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let m = self.imp.moments(weights);
        (0..self.imp.n())
            .into_par_iter()
            .map(|i| self.chi(i, weights, &m))
            .collect()
    }

    /// `n^-1 sum_i h(X_i, r(X_i) + e)`, the empirical conditional mean of `h` given `eps = e`.
    pub fn hbar(&self, e: f64) -> Result<f64> {
        match &self.reduced {
            Reduced::Linear { mean_a, mean_ar, .. } => Ok(mean_ar + mean_a * e),
            Reduced::Square { mean_r, mean_r2 } => Ok(mean_r2 + 2.0 * e * mean_r + e * e),
            Reduced::None => {
                let mut acc = CompensatedSum::new();
                for (i, (x, _)) in self.imp.ds.rows().enumerate() {
                    acc.add(self.h.eval_unchecked(x, self.imp.fitted[i] + e)?);
                }
                Ok(acc.value() / self.imp.n() as f64)
            }
        }
    }

    /// `h(X_j, Y_j)` for an observed row.
    pub fn observed_value(&self, j: usize) -> Result<f64> {
        let y = self.imp.ds.y(j).ok_or(Error::NoObservedResponses)?;
        self.h.eval_unchecked(self.imp.ds.x(j), y)
    }
}

/// Imputed conditional expectation `chi(x)`; unit weights when `w` is `None`.
pub fn chi_hat(
    x: &[f64],
    ds: &Dataset,
    model: &dyn RegressionModel,
    theta: &[f64],
    h: &Functional,
    w: Option<&ElWeights>,
) -> Result<f64> {
    let imp = Imputation::new(ds, model, theta)?;
    let prepared = imp.prepare(h, true)?;
    let unit;
    let weights = match w {
        Some(w) => &w.weights,
        None => {
            unit = vec![1.0; ds.len()];
            &unit
        }
    };
    if weights.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            what: "weight vector",
            expected: ds.len(),
            got: weights.len(),
        });
    }
    let fitted = crate::model::eval_regression(model, theta, x)?;
    let m = imp.moments(weights);
    prepared.chi_at(x, fitted, weights, &m)
}

pub fn estimate(
    ds: &Dataset,
    model: &dyn RegressionModel,
    theta: &[f64],
    h: &Functional,
    method: Estimator,
    propensity: Option<&Propensity>,
) -> Result<f64> {
    estimate_with(ds, model, theta, h, method, propensity, &EstimateOptions::default())
}

pub fn estimate_with(
    ds: &Dataset,
    model: &dyn RegressionModel,
    theta: &[f64],
    h: &Functional,
    method: Estimator,
    propensity: Option<&Propensity>,
    opts: &EstimateOptions,
) -> Result<f64> {
    let imp = Imputation::new(ds, model, theta)?;
    estimate_prepared(&imp, h, method, propensity, opts)
}

/// Runs one estimator on an existing [`Imputation`], so several estimators
/// can share fitted values and residuals.
pub fn estimate_prepared(
    imp: &Imputation<'_>,
    h: &Functional,
    method: Estimator,
    propensity: Option<&Propensity>,
    opts: &EstimateOptions,
) -> Result<f64> {
    let n = imp.n() as f64;
    let ds = imp.dataset();
    match method {
        Estimator::FiWeighted => {
            let w = imp.el_weights(opts.el_tolerance)?;
            let prepared = imp.prepare(h, opts.use_reductions)?;
            Ok(numeric::sum(prepared.chi_all(&w.weights)?) / n)
        }
        Estimator::FiUnweighted => {
            let prepared = imp.prepare(h, opts.use_reductions)?;
            Ok(numeric::sum(prepared.chi_all(&vec![1.0; imp.n()])?) / n)
        }
        Estimator::PartiallyImputed | Estimator::PartiallyImputedWeighted => {
            let prepared = imp.prepare(h, opts.use_reductions)?;
            let weights = if method == Estimator::PartiallyImputed {
                vec![1.0; imp.n()]
            } else {
                imp.el_weights(opts.el_tolerance)?.weights
            };
            let m = imp.moments(&weights);
            let terms = (0..imp.n())
                .into_par_iter()
                .map(|i| match ds.y(i) {
                    Some(y) => h.eval_unchecked(ds.x(i), y),
                    None => prepared.chi(i, &weights, &m),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(numeric::sum(terms) / n)
        }
        Estimator::IpwNaive => {
            let pi = propensity.ok_or(Error::MissingPropensity("ipw"))?;
            let mut acc = CompensatedSum::new();
            for (x, y) in ds.rows() {
                if let Some(y) = y {
                    acc.add(h.eval_unchecked(x, y)? / pi.prob(x)?);
                }
            }
            Ok(acc.value() / n)
        }
        Estimator::MeanResponseFast => {
            if !h.is_pure_response_linear() {
                return Err(Error::TagMismatch {
                    method: "mean_fast",
                    required: "PURE_RESPONSE_LINEAR",
                });
            }
            let mut acc = CompensatedSum::new();
            for (i, (x, _)) in ds.rows().enumerate() {
                acc.add(h.coefficient(x).expect("tagged functional")? * imp.fitted()[i]);
            }
            Ok(acc.value() / n)
        }
        Estimator::SecondMomentFast => {
            if !h.is_second_moment() {
                return Err(Error::TagMismatch {
                    method: "second_moment_fast",
                    required: "SECOND_MOMENT",
                });
            }
            let w = imp.el_weights(opts.el_tolerance)?;
            let mean_r2 = numeric::sum(imp.fitted().iter().map(|r| r * r)) / n;
            Ok(mean_r2 + imp.moments(&w.weights).sw2)
        }
    }
}
