//! Residual-based empirical likelihood weights.
//!
//! The weights `w_j = 1 / (1 + lambda * z_j * eps_j)` maximize `prod_j w_j`
//! subject to `sum_j w_j z_j eps_j = 0`. The multiplier solves
//!
//! ```text
//! g(lambda) = sum_j z_j eps_j / (1 + lambda z_j eps_j) = 0
//! ```
//!
//! on the open interval where every `1 + lambda z_j eps_j` is positive. There
//! `g` is strictly decreasing and runs from `+inf` to `-inf`, so the root is
//! unique whenever the observed residuals take both signs. When they do not,
//! no root exists and `lambda` is set to zero.
//!
//! Since `w_j = 1 - lambda w_j z_j eps_j`, summing gives
//! `sum_j w_j = n - lambda g(lambda)`, so a tight constraint also pins the
//! total weight to `n`.

use crate::data::Residual;
use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElStatus {
    Solved,
    /// Observed nonzero residuals all share one sign (or there are none); `lambda = 0`.
    DegenerateSign,
    /// No observed responses; `lambda = 0`.
    AllMissing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElWeights {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub status: ElStatus,
    /// `sum_j w_j z_j eps_j` at the returned multiplier.
    pub constraint_residual: f64,
}

impl ElWeights {
    /// Unit weights, as used by the unweighted estimators.
    pub fn unit(n: usize, status: ElStatus) -> Self {
        ElWeights {
            lambda: 0.0,
            weights: vec![1.0; n],
            status,
            constraint_residual: 0.0,
        }
    }
}

pub const DEFAULT_MAX_ITER: usize = 200;

/// `1e-10` times the largest absolute residual (or `1e-10` when all are zero).
pub fn default_tolerance(residuals: &[Residual]) -> f64 {
    let scale = residuals.iter().map(|r| r.z_eps().abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        1e-10 * scale
    } else {
        1e-10
    }
}

/// Solves for the Lagrange multiplier by Newton steps safeguarded with
/// bisection inside the positivity bracket.
pub fn solve_lagrange(residuals: &[Residual], tol_abs: f64, max_iter: usize) -> Result<ElWeights> {
    if residuals.is_empty() {
        return Err(Error::InvalidData("empty residual vector".into()));
    }
    if let Some(i) = residuals.iter().position(|r| !r.eps.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    if tol_abs.is_nan() || tol_abs <= 0.0 {
        return Err(Error::InvalidData(format!("tolerance must be positive, got {tol_abs}")));
    }
    let n = residuals.len();
    if !residuals.iter().any(|r| r.z) {
        return Ok(ElWeights::unit(n, ElStatus::AllMissing));
    }

    let mut max_pos = 0.0_f64;
    let mut min_neg = 0.0_f64;
    for r in residuals {
        let v = r.z_eps();
        max_pos = max_pos.max(v);
        min_neg = min_neg.min(v);
    }
    if max_pos <= 0.0 || min_neg >= 0.0 {
        let mut w = ElWeights::unit(n, ElStatus::DegenerateSign);
        w.constraint_residual = numeric::sum(residuals.iter().map(Residual::z_eps));
        return Ok(w);
    }

    // open bracket on which all 1 + lambda z eps stay positive
    let mut lo = -1.0 / max_pos;
    let mut hi = -1.0 / min_neg;
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let (g, dg) = constraint_and_slope(residuals, lambda);
        if g.abs() <= tol_abs {
            let weights = weights_from_lambda(residuals, lambda)?;
            return Ok(ElWeights {
                lambda,
                weights,
                status: ElStatus::Solved,
                constraint_residual: g,
            });
        }
        if g > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - g / dg;
        lambda = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if !(lambda > lo && lambda < hi) {
            break;
        }
    }
    Err(Error::SolverNonConvergence {
        iterations: max_iter,
        lo,
        hi,
    })
}

/// `g(lambda)` and `g'(lambda)`, both compensated sums in index order.
fn constraint_and_slope(residuals: &[Residual], lambda: f64) -> (f64, f64) {
    let mut g = CompensatedSum::new();
    let mut dg = CompensatedSum::new();
    for r in residuals {
        let v = r.z_eps();
        if v != 0.0 {
            let t = v / (1.0 + lambda * v);
            g.add(t);
            dg.add(-t * t);
        }
    }
    (g.value(), dg.value())
}

/// `w_j = 1 / (1 + lambda z_j eps_j)`.
pub fn weights_from_lambda(residuals: &[Residual], lambda: f64) -> Result<Vec<f64>> {
    residuals
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let denom = 1.0 + lambda * r.z_eps();
            if denom > 0.0 {
                Ok(1.0 / denom)
            } else {
                Err(Error::WeightPositivity { index, value: denom })
            }
        })
        .collect()
}

/// Empirical quantities that should stay bounded (or shrink) as the sample grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElDiagnostics {
    /// `max_j |w_j - 1|`
    pub max_weight_dev: f64,
    pub sum_weights: f64,
    /// `n^-1 sum_j z_j eps_j`
    pub mean_z_eps: f64,
    /// `n^-1 sum_j z_j eps_j^2`
    pub mean_z_eps_sq: f64,
}

pub fn diagnostics(residuals: &[Residual], w: &ElWeights, n: usize) -> ElDiagnostics {
    let n = n as f64;
    ElDiagnostics {
        max_weight_dev: w.weights.iter().map(|w| (w - 1.0).abs()).fold(0.0, f64::max),
        sum_weights: numeric::sum(w.weights.iter().copied()),
        mean_z_eps: numeric::sum(residuals.iter().map(Residual::z_eps)) / n,
        mean_z_eps_sq: numeric::sum(residuals.iter().map(|r| r.z_eps() * r.z_eps())) / n,
    }
}
