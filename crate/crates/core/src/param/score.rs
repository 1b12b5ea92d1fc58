//! Kernel estimate of the error score and the one-step efficient update.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::least_squares::{discretize_theta, fit_least_squares};
use super::{ThetaEstimate, ThetaMethod};
use crate::data::{Dataset, Residual};
use crate::error::{Error, Result};
use crate::model::{residuals, RegressionModel};
use crate::numeric::{self, CompensatedSum};

/// Logistic density `e^-u / (1 + e^-u)^2`.
pub fn kernel(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `k'(u) = -k(u) tanh(u / 2)`.
pub fn kernel_derivative(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    let k = e / ((1.0 + e) * (1.0 + e));
    -k * u.signum() * (1.0 - e) / (1.0 + e)
}

/// Bandwidth rule `a = a_factor * sigma * n_obs^-a_exponent`, `b = n_obs^-b_exponent`,
/// with `sigma^2` the mean squared observed residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub a_factor: f64,
    pub a_exponent: f64,
    pub b_exponent: f64,
}

impl Default for Bandwidths {
    fn default() -> Self {
        Bandwidths {
            a_factor: 0.75,
            a_exponent: 0.2,
            b_exponent: 2.0,
        }
    }
}

impl Bandwidths {
    pub fn resolve(&self, residuals: &[Residual]) -> Result<(f64, f64)> {
        let k = residuals.iter().filter(|r| r.z).count();
        if k == 0 {
            return Err(Error::NoObservedResponses);
        }
        let k = k as f64;
        let sigma2 = numeric::sum(residuals.iter().map(|r| r.z_eps() * r.z_eps())) / k;
        if sigma2 <= 0.0 {
            return Err(Error::ZeroResidualVariance);
        }
        Ok((
            self.a_factor * sigma2.sqrt() * k.powf(-self.a_exponent),
            k.powf(-self.b_exponent),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreValue {
    pub f: f64,
    pub fprime: f64,
    pub ell: f64,
}

/// Ridged kernel estimate `l(x) = -f'(x) / (b + f(x))` of the error score,
/// built from the observed residuals. `f` is normalized by the full row
/// count, so it integrates to the observed fraction.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    a: f64,
    b: f64,
    eps: Vec<f64>,
    n: usize,
}

impl ScoreModel {
    pub fn new(residuals: &[Residual], a: f64, b: f64) -> Result<ScoreModel> {
        if !(a > 0.0 && a.is_finite()) || !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidData(format!(
                "bandwidths must satisfy a > 0, b >= 0; got a={a}, b={b}"
            )));
        }
        let eps: Vec<f64> = residuals.iter().filter(|r| r.z).map(|r| r.eps).collect();
        if eps.is_empty() {
            return Err(Error::NoObservedResponses);
        }
        Ok(ScoreModel {
            a,
            b,
            eps,
            n: residuals.len(),
        })
    }

    pub fn from_residuals(residuals: &[Residual], bw: &Bandwidths) -> Result<ScoreModel> {
        let (a, b) = bw.resolve(residuals)?;
        ScoreModel::new(residuals, a, b)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn eval(&self, x: f64) -> ScoreValue {
        let mut f = CompensatedSum::new();
        let mut fp = CompensatedSum::new();
        for &e in &self.eps {
            let u = (x - e) / self.a;
            f.add(kernel(u));
            fp.add(kernel_derivative(u));
        }
        let n = self.n as f64;
        let f = f.value() / (n * self.a);
        let fprime = fp.value() / (n * self.a * self.a);
        let denom = self.b + f;
        let ell = if denom > 0.0 { -fprime / denom } else { 0.0 };
        ScoreValue { f, fprime, ell }
    }

    pub fn ell(&self, x: f64) -> f64 {
        self.eval(x).ell
    }
}

pub fn score_estimate(s: &ScoreModel, x: f64) -> ScoreValue {
    s.eval(x)
}

/// Estimated efficient scores of the observed rows.
#[derive(Debug, Clone)]
pub struct Zeta {
    /// Dataset indices of the observed rows, in order.
    pub rows: Vec<usize>,
    /// One row of `p` entries per observed row.
    pub zeta: DMatrix<f64>,
    /// Mean gradient over observed rows.
    pub mu: Vec<f64>,
    /// Mean squared observed residual.
    pub sigma2: f64,
}

impl Zeta {
    /// `(sum zeta zeta^T, sum zeta)` in fixed row order.
    pub fn sums(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.zeta.ncols();
        let mut outer = DMatrix::zeros(p, p);
        let mut total = DVector::zeros(p);
        for a in 0..p {
            let col_a = self.zeta.column(a);
            total[a] = numeric::sum(col_a.iter().copied());
            for b in 0..=a {
                let v = numeric::sum(col_a.iter().zip(self.zeta.column(b).iter()).map(|(x, y)| x * y));
                outer[(a, b)] = v;
                outer[(b, a)] = v;
            }
        }
        (outer, total)
    }
}

/// `zeta_j = (rdot_j - mu) l(eps_j) + mu eps_j / sigma^2` for every observed row,
/// with residuals and gradients taken at `theta`.
pub fn zeta_hat(ds: &Dataset, m: &dyn RegressionModel, theta: &[f64], s: &ScoreModel) -> Result<Zeta> {
    let res = residuals(m, theta, ds)?;
    let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.observed(i)).collect();
    if rows.is_empty() {
        return Err(Error::NoObservedResponses);
    }
    let p = m.n_params();
    let k = rows.len() as f64;
    let sigma2 = numeric::sum(rows.iter().map(|&j| res[j].eps * res[j].eps)) / k;
    if sigma2 <= 0.0 {
        return Err(Error::ZeroResidualVariance);
    }
    let grads = rows
        .iter()
        .map(|&j| {
            let mut g = vec![0.0; p];
            m.gradient_into(theta, ds.x(j), &mut g).map(|_| g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mu: Vec<f64> = (0..p).map(|a| numeric::sum(grads.iter().map(|g| g[a])) / k).collect();
    let ell: Vec<f64> = rows.par_iter().map(|&j| s.ell(res[j].eps)).collect();
    let zeta = DMatrix::from_fn(rows.len(), p, |r, a| {
        let e = res[rows[r]].eps;
        (grads[r][a] - mu[a]) * ell[r] + mu[a] * e / sigma2
    });
    Ok(Zeta { rows, zeta, mu, sigma2 })
}

/// `theta_bar + M^-1 v` with `M = sum zeta zeta^T`, `v = sum zeta`.
pub fn one_step_efficient(
    ds: &Dataset,
    m: &dyn RegressionModel,
    theta_bar: &[f64],
    s: &ScoreModel,
    condition_cap: f64,
) -> Result<ThetaEstimate> {
    let z = zeta_hat(ds, m, theta_bar, s)?;
    let (outer, total) = z.sums();
    let step = numeric::solve_spd(&outer, &total, condition_cap)?;
    Ok(ThetaEstimate {
        theta: theta_bar.iter().zip(step.iter()).map(|(t, d)| t + d).collect(),
        method: ThetaMethod::OneStepEfficient,
        iterations: 1,
        converged: true,
        preliminary: Some(theta_bar.to_vec()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepOptions {
    /// Grid constant for the preliminary estimate, step `c / sqrt(n)`.
    pub grid: f64,
    pub bandwidths: Bandwidths,
    pub condition_cap: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OneStepOptions {
    fn default() -> Self {
        OneStepOptions {
            grid: 1.0,
            bandwidths: Bandwidths::default(),
            condition_cap: 1e12,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

/// Least squares, discretized, then one efficient update with the score
/// estimated from the residuals at the discretized estimate.
pub fn efficient_theta(
    ds: &Dataset,
    m: &dyn RegressionModel,
    theta_init: &[f64],
    opts: &OneStepOptions,
) -> Result<ThetaEstimate> {
    let ols = fit_least_squares(ds, m, theta_init, opts.max_iter, opts.tol)?;
    let theta_bar = discretize_theta(&ols.theta, ds.len(), opts.grid);
    let res = residuals(m, &theta_bar, ds)?;
    let s = ScoreModel::from_residuals(&res, &opts.bandwidths)?;
    one_step_efficient(ds, m, &theta_bar, &s, opts.condition_cap)
}
