use nalgebra::{DMatrix, DVector};

use super::{ThetaEstimate, ThetaMethod};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::RegressionModel;
use crate::numeric::{self, CompensatedSum};

const MAX_HALVINGS: usize = 30;
const NORMAL_EQUATIONS_CAP: f64 = 1e14;

/// `sum_i Z_i {Y_i - r(theta, X_i)}^2`.
pub fn objective(ds: &Dataset, m: &dyn RegressionModel, theta: &[f64]) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (x, y) in ds.rows() {
        if let Some(y) = y {
            let e = y - m.value(theta, x)?;
            acc.add(e * e);
        }
    }
    Ok(acc.value())
}

/// `(J^T J, J^T e, sum e^2)` over the observed rows.
fn normal_equations(ds: &Dataset, m: &dyn RegressionModel, theta: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let p = m.n_params();
    let mut jtj = DMatrix::zeros(p, p);
    let mut jte = DVector::zeros(p);
    let mut obj = CompensatedSum::new();
    let mut g = vec![0.0; p];
    for (x, y) in ds.rows() {
        let Some(y) = y else { continue };
        let e = y - m.value(theta, x)?;
        m.gradient_into(theta, x, &mut g)?;
        for a in 0..p {
            jte[a] += g[a] * e;
            for b in 0..=a {
                jtj[(a, b)] += g[a] * g[b];
            }
        }
        obj.add(e * e);
    }
    for a in 0..p {
        for b in 0..a {
            jtj[(b, a)] = jtj[(a, b)];
        }
    }
    Ok((jtj, jte, obj.value()))
}

/// Least squares on the complete cases.
///
/// Models linear in `theta` are solved in one step from the normal equations
/// at `theta_init` (exact for any starting point). Others use Gauss–Newton
/// with step halving; the objective never increases between accepted steps.
/// On non-convergence the best iterate is returned with `converged = false`.
pub fn fit_least_squares(
    ds: &Dataset,
    m: &dyn RegressionModel,
    theta_init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<ThetaEstimate> {
    let p = m.n_params();
    if theta_init.len() != p {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: p,
            got: theta_init.len(),
        });
    }
    if ds.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "dataset covariates",
            expected: m.dim(),
            got: ds.dim(),
        });
    }
    if theta_init.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidData("initial parameter must be finite".into()));
    }
    let k = ds.require_observed()?;
    if k < p {
        return Err(Error::InvalidData(format!(
            "{k} observed rows cannot identify {p} parameters"
        )));
    }

    let mut theta = DVector::from_column_slice(theta_init);
    if m.is_linear_in_params() {
        let (jtj, jte, _) = normal_equations(ds, m, theta.as_slice())?;
        theta += numeric::solve_spd(&jtj, &jte, NORMAL_EQUATIONS_CAP)?;
        return Ok(ThetaEstimate {
            theta: theta.iter().copied().collect(),
            method: ThetaMethod::Ols,
            iterations: 1,
            converged: true,
            preliminary: None,
        });
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let (jtj, jte, obj) = normal_equations(ds, m, theta.as_slice())?;
        if 2.0 * jte.norm() <= tol * (1.0 + obj) {
            converged = true;
            break;
        }
        iterations += 1;
        let delta = numeric::solve_spd(&jtj, &jte, NORMAL_EQUATIONS_CAP)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta + &delta * step;
            if let Ok(o) = objective(ds, m, cand.as_slice()) {
                if o <= obj {
                    accepted = Some(cand);
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some(next) => {
                let moved = (&next - &theta).norm();
                theta = next;
                // stationary up to rounding
                if moved <= f64::EPSILON * (1.0 + theta.norm()) {
                    converged = true;
                    break;
                }
            }
            None => break,
        }
    }
    Ok(ThetaEstimate {
        theta: theta.iter().copied().collect(),
        method: ThetaMethod::Ols,
        iterations,
        converged,
        preliminary: None,
    })
}

/// Rounds each coordinate to the nearest multiple of `c / sqrt(n)`.
pub fn discretize_theta(theta: &[f64], n: usize, c: f64) -> Vec<f64> {
    let step = c / (n as f64).sqrt();
    theta.iter().map(|t| (t / step).round() * step).collect()
}
