use rayon::prelude::*;
use statrs::distribution::{Continuous, StudentsT};

use super::{ErrorLaw, SimulationConfig};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::functional::FunctionalForm;
use crate::numeric::{self, CompensatedSum};
use crate::param::kernel;

const COARSE_ORDER: usize = 16;
const FINE_ORDER: usize = 32;
/// Panels of the error integral in the mapped variable.
const ERROR_PANELS: usize = 16;
const AGREEMENT: f64 = 1e-5;
const MAX_NODES: f64 = 5e7;

/// `E h(X, Y)` under the generating law of `cfg`.
///
/// Uses, in order: the configured `truth`; closed forms for `h = y` and
/// `h = y^2` with the built-in models; tensor Gauss–Legendre quadrature over
/// the covariates and the error. Quadrature runs at two orders and must agree
/// to `1e-5`, otherwise the value has to be supplied.
pub fn true_functional_value(cfg: &SimulationConfig) -> Result<f64> {
    if let Some(t) = cfg.truth {
        return Ok(t);
    }
    if let Some(v) = closed_form(cfg)? {
        return Ok(v);
    }
    let intractable = |why: String| {
        Error::Unsupported(format!(
            "no closed form for E[{}] and quadrature failed ({why}); set `truth` in the config",
            cfg.h.source()
        ))
    };
    let coarse = quadrature(cfg, COARSE_ORDER).map_err(|e| intractable(e.to_string()))?;
    let fine = quadrature(cfg, FINE_ORDER).map_err(|e| intractable(e.to_string()))?;
    if (coarse - fine).abs() > AGREEMENT {
        return Err(intractable(format!("orders disagree: {coarse} vs {fine}")));
    }
    Ok(fine)
}

fn closed_form(cfg: &SimulationConfig) -> Result<Option<f64>> {
    let t = &cfg.theta;
    let identity =
        matches!(cfg.h.form(), FunctionalForm::PureResponseLinear { coefficient: Expr::Num(a) } if *a == 1.0);
    let square = cfg.h.is_second_moment();
    if !identity && !square {
        return Ok(None);
    }
    // E r(X) and E r(X)^2 for X uniform on (-1, 1)^d
    let (mean_r, mean_r2) = match cfg.model.name() {
        "linear" => (0.0, t.iter().map(|v| v * v).sum::<f64>() / 3.0),
        "linear_intercept" => (t[0], t[0] * t[0] + t[1..].iter().map(|v| v * v).sum::<f64>() / 3.0),
        "cosine" => {
            let th = t[0];
            if th == 0.0 {
                (1.0, 1.0)
            } else {
                ((th.sin()) / th, 0.5 + (2.0 * th).sin() / (4.0 * th))
            }
        }
        _ => return Ok(None),
    };
    if identity {
        return Ok(Some(mean_r));
    }
    match cfg.errors.variance() {
        Some(v) => Ok(Some(mean_r2 + v)),
        None => Err(Error::Unsupported(
            "second moment is infinite for this error law".into(),
        )),
    }
}

type Density = Box<dyn Fn(f64) -> f64 + Sync>;

/// Error density and the scale used to map `(-1, 1)` onto the real line.
fn density(law: &ErrorLaw) -> Result<(Density, f64)> {
    Ok(match *law {
        ErrorLaw::Normal { sd } => {
            let c = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
            (Box::new(move |e: f64| c * (-0.5 * (e / sd).powi(2)).exp()), sd)
        }
        ErrorLaw::StudentT { dof, standardized } => {
            let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidData(e.to_string()))?;
            let c = if standardized { ((dof - 2.0) / dof).sqrt() } else { 1.0 };
            (Box::new(move |e: f64| t.pdf(e / c) / c), c)
        }
        ErrorLaw::Logistic => (Box::new(kernel), 1.0),
    })
}

fn quadrature(cfg: &SimulationConfig, order: usize) -> Result<f64> {
    let d = cfg.dim();
    if (order as f64).powi(d as i32 + 1) > MAX_NODES {
        return Err(Error::Unsupported(format!(
            "{d}-dimensional covariates are too many for quadrature"
        )));
    }
    let (xn, xw) = numeric::gauss_legendre(order);
    // error nodes: eps = s t / (1 - t^2), composite rule in t
    let degenerate = matches!(cfg.errors, ErrorLaw::Normal { sd } if sd == 0.0);
    let eps_nodes: Vec<(f64, f64)> = if degenerate {
        vec![(0.0, 1.0)]
    } else {
        let (pdf, s) = density(&cfg.errors)?;
        let (pn, pw) = numeric::gauss_legendre(order / 2);
        let half = 1.0 / ERROR_PANELS as f64;
        let mut nodes = Vec::with_capacity(ERROR_PANELS * pn.len());
        for k in 0..ERROR_PANELS {
            let mid = -1.0 + (2 * k + 1) as f64 * half;
            for (&u, &w) in pn.iter().zip(&pw) {
                let t = mid + half * u;
                let q = 1.0 - t * t;
                let e = s * t / q;
                nodes.push((e, half * w * s * (1.0 + t * t) / (q * q) * pdf(e)));
            }
        }
        nodes
    };

    let cells = order.pow(d as u32);
    let parts = (0..cells)
        .into_par_iter()
        .map(|mut cell| {
            let mut x = vec![0.0; d];
            let mut wx = 1.0;
            for v in x.iter_mut() {
                let k = cell % order;
                cell /= order;
                *v = xn[k];
                wx *= 0.5 * xw[k];
            }
            let r = cfg.model.value(&cfg.theta, &x)?;
            let mut acc = CompensatedSum::new();
            for &(e, we) in &eps_nodes {
                if we != 0.0 {
                    acc.add(we * cfg.h.eval(&x, r + e)?);
                }
            }
            Ok(wx * acc.value())
        })
        .collect::<Result<Vec<f64>>>()?;
    let v = numeric::sum(parts);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain("non-finite integral".into()))
    }
}
