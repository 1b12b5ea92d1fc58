//! Parametric regression functions `r(theta, x)` with analytic gradients.

use std::fmt;
use std::sync::Arc;

use crate::data::{Dataset, Residual};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Scope};

/// A mean function `r(theta, x)` together with its gradient in `theta`.
///
/// Implementations must return a true analytic gradient; it is what the
/// efficiency theory and the one-step estimator rely on. Whether the model
/// satisfies the usual moment and differentiability conditions for a given
/// covariate law is the caller's responsibility.
pub trait RegressionModel: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension `p`.
    fn n_params(&self) -> usize;

    /// Covariate dimension `d`.
    fn dim(&self) -> usize;

    /// `r(theta, x)` without dimension checks.
    fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64>;

    /// Writes the gradient in `theta` into `out` (length `p`).
    fn gradient_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Models linear in `theta` are fitted by normal equations.
    fn is_linear_in_params(&self) -> bool {
        false
    }
}

pub type SharedModel = Arc<dyn RegressionModel>;

fn check_dims(m: &dyn RegressionModel, theta: &[f64], x: &[f64]) -> Result<()> {
    if theta.len() != m.n_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: m.n_params(),
            got: theta.len(),
        });
    }
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "covariate vector",
            expected: m.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `r(theta, x)` with dimension checks.
pub fn eval_regression(m: &dyn RegressionModel, theta: &[f64], x: &[f64]) -> Result<f64> {
    check_dims(m, theta, x)?;
    m.value(theta, x)
}

/// Gradient of `r(theta, x)` in `theta`, with dimension checks.
pub fn eval_gradient(m: &dyn RegressionModel, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_dims(m, theta, x)?;
    let mut out = vec![0.0; m.n_params()];
    m.gradient_into(theta, x, &mut out)?;
    Ok(out)
}

/// Residuals `y - r(theta, x)` for observed rows, zero for missing ones.
pub fn residuals(m: &dyn RegressionModel, theta: &[f64], ds: &Dataset) -> Result<Vec<Residual>> {
    if theta.len() != m.n_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: m.n_params(),
            got: theta.len(),
        });
    }
    if ds.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "dataset covariates",
            expected: m.dim(),
            got: ds.dim(),
        });
    }
    ds.rows()
        .map(|(x, y)| match y {
            Some(y) => Ok(Residual::observed(y - m.value(theta, x)?)),
            None => Ok(Residual::missing()),
        })
        .collect()
}

/// `theta . x`
#[derive(Debug, Clone)]
pub struct Linear {
    dim: usize,
}

impl Linear {
    pub fn new(dim: usize) -> Self {
        Linear { dim }
    }
}

impl RegressionModel for Linear {
    fn name(&self) -> &str {
        "linear"
    }
    fn n_params(&self) -> usize {
        self.dim
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok(theta.iter().zip(x).map(|(t, x)| t * x).sum())
    }
    fn gradient_into(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(x);
        Ok(())
    }
    fn is_linear_in_params(&self) -> bool {
        true
    }
}

/// `theta_0 + theta_1..p . x`
#[derive(Debug, Clone)]
pub struct LinearIntercept {
    dim: usize,
}

impl LinearIntercept {
    pub fn new(dim: usize) -> Self {
        LinearIntercept { dim }
    }
}

impl RegressionModel for LinearIntercept {
    fn name(&self) -> &str {
        "linear_intercept"
    }
    fn n_params(&self) -> usize {
        self.dim + 1
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok(theta[0] + theta[1..].iter().zip(x).map(|(t, x)| t * x).sum::<f64>())
    }
    fn gradient_into(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = 1.0;
        out[1..].copy_from_slice(x);
        Ok(())
    }
    fn is_linear_in_params(&self) -> bool {
        true
    }
}

/// `cos(theta * x1)`; further covariates are ignored.
#[derive(Debug, Clone)]
pub struct Cosine {
    dim: usize,
}

impl Cosine {
    pub fn new(dim: usize) -> Self {
        Cosine { dim }
    }
}

impl RegressionModel for Cosine {
    fn name(&self) -> &str {
        "cosine"
    }
    fn n_params(&self) -> usize {
        1
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        Ok((theta[0] * x[0]).cos())
    }
    fn gradient_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = -x[0] * (theta[0] * x[0]).sin();
        Ok(())
    }
}

/// Model given by expressions in `x1..xd` and `t1..tp`: the mean function
/// and one expression per partial derivative.
#[derive(Debug, Clone)]
pub struct CustomModel {
    dim: usize,
    mean: Expr,
    partials: Vec<Expr>,
    linear: bool,
}

impl CustomModel {
    pub fn new<S: AsRef<str>>(dim: usize, mean: &str, partials: &[S]) -> Result<CustomModel> {
        let p = partials.len();
        if p == 0 {
            return Err(Error::Unsupported(
                "custom model needs one gradient expression per parameter".into(),
            ));
        }
        let scope = Scope::model(dim, p);
        let mean = Expr::parse(mean, scope)?;
        let partials = partials
            .iter()
            .map(|s| Expr::parse(s.as_ref(), scope))
            .collect::<Result<Vec<_>>>()?;
        let mentions_param = |e: &Expr| e.mentions(&|v| matches!(v, crate::expr::Var::Param(_)));
        let linear = !partials.iter().any(mentions_param);
        Ok(CustomModel {
            dim,
            mean,
            partials,
            linear,
        })
    }
}

impl RegressionModel for CustomModel {
    fn name(&self) -> &str {
        "custom"
    }
    fn n_params(&self) -> usize {
        self.partials.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.mean.eval(&Env::with_theta(x, theta))
    }
    fn gradient_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        let env = Env::with_theta(x, theta);
        for (slot, e) in out.iter_mut().zip(&self.partials) {
            *slot = e.eval(&env)?;
        }
        Ok(())
    }
    // parameter-free partials mean r is affine in theta
    fn is_linear_in_params(&self) -> bool {
        self.linear
    }
}

/// Looks up a built-in model by name: `linear`, `linear_intercept` or `cosine`.
pub fn builtin_model(name: &str, dim: usize) -> Result<SharedModel> {
    if dim == 0 {
        return Err(Error::InvalidData("covariate dimension must be positive".into()));
    }
    Ok(match name {
        "linear" => Arc::new(Linear::new(dim)),
        "linear_intercept" => Arc::new(LinearIntercept::new(dim)),
        "cosine" => Arc::new(Cosine::new(dim)),
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

/// Covariate dimension implied by a built-in model with `p` parameters.
pub fn builtin_dim(name: &str, p: usize) -> Result<usize> {
    match name {
        "linear" if p >= 1 => Ok(p),
        "linear_intercept" if p >= 2 => Ok(p - 1),
        "cosine" if p == 1 => Ok(1),
        "linear" | "linear_intercept" | "cosine" => {
            Err(Error::InvalidData(format!("model `{name}` cannot have {p} parameters")))
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}
