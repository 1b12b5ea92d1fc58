//! Plug-in asymptotic variance of the weighted fully imputed estimator and
//! normal confidence intervals.
//!
//! The variance of `sqrt(n) (estimate - truth)` is assembled as
//!
//! ```text
//! E chi^2 + E hbar^2 / EZ - (1 + 1/EZ) E^2 h - E^2{eps hbar} / (sigma^2 EZ) + D^T M^-1 D
//! ```
//!
//! Every expectation over the error law is taken with the empirical
//! likelihood weights `w_j Z_j / sum Z`, which sum to one and give the
//! residuals mean zero. With those weights `chi`, `hbar` and `h` share the
//! same mean (the point estimate), so the first four terms are centered
//! exactly: adding a constant to `h` leaves the variance unchanged, and a
//! constant `h` has variance zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::el::ElStatus;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Imputation};
use crate::functional::Functional;
use crate::model::{residuals, RegressionModel};
use crate::numeric::{self, CompensatedSum};
use crate::param::{zeta_hat, Bandwidths, ScoreModel};

pub const CONDITION_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponents {
    pub e_chi2: f64,
    pub e_hbar2: f64,
    pub e2_h: f64,
    pub e_eps_hbar: f64,
    pub sigma2: f64,
    pub ez: f64,
    pub d_w: Vec<f64>,
    /// `n^-1 sum Z zeta zeta^T`
    pub m: DMatrix<f64>,
    /// `D^T M^-1 D`
    pub efficiency_term: f64,
    /// Assembled variance, clamped at zero.
    pub variance: f64,
    /// Set when the assembled value was negative and got clamped.
    pub clamped: bool,
    /// The weighted fully imputed point estimate the components are centered at.
    pub value: f64,
    pub el_status: ElStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalEstimate {
    pub value: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub n: usize,
    pub method: Estimator,
    pub components: VarianceComponents,
}

/// `n^-1 sum_i h(X_i, r(X_i) + e)`.
pub fn hbar_hat(e: f64, ds: &Dataset, m: &dyn RegressionModel, theta: &[f64], h: &Functional) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidData("empty dataset".into()));
    }
    let mut acc = CompensatedSum::new();
    for (x, _) in ds.rows() {
        acc.add(h.eval(x, crate::model::eval_regression(m, theta, x)? + e)?);
    }
    Ok(acc.value() / ds.len() as f64)
}

/// Score model from the residuals at `theta` with the given bandwidth rule.
pub fn score_model_at(ds: &Dataset, m: &dyn RegressionModel, theta: &[f64], bw: &Bandwidths) -> Result<ScoreModel> {
    ScoreModel::from_residuals(&residuals(m, theta, ds)?, bw)
}

/// `n^-1 sum Z zeta zeta^T` at `theta`.
fn information(ds: &Dataset, m: &dyn RegressionModel, theta: &[f64], s: &ScoreModel) -> Result<DMatrix<f64>> {
    let (outer, _) = zeta_hat(ds, m, theta, s)?.sums();
    Ok(outer / ds.len() as f64)
}

fn quadratic_form(d: &[f64], m: &DMatrix<f64>) -> Result<f64> {
    // a zero gradient contributes nothing, whatever the information
    if d.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let d = DVector::from_column_slice(d);
    let x = numeric::solve_spd(m, &d, CONDITION_CAP)?;
    Ok(d.dot(&x))
}

pub fn variance_general(
    ds: &Dataset,
    m: &dyn RegressionModel,
    theta: &[f64],
    h: &Functional,
    s: &ScoreModel,
) -> Result<VarianceComponents> {
    variance_general_with(ds, m, theta, h, s, true)
}

/// As [`variance_general`]; `use_reductions = false` forces the generic
/// double sums and the generic gradient term even for tagged functionals.
pub fn variance_general_with(
    ds: &Dataset,
    m: &dyn RegressionModel,
    theta: &[f64],
    h: &Functional,
    s: &ScoreModel,
    use_reductions: bool,
) -> Result<VarianceComponents> {
    let imp = Imputation::new(ds, m, theta)?;
    let k = imp.n_observed();
    if k < 2 {
        return Err(Error::InvalidData(
            "variance needs at least two observed responses".into(),
        ));
    }
    let n = imp.n() as f64;
    let kf = k as f64;
    let el = imp.el_weights(None)?;
    let prepared = imp.prepare(h, use_reductions)?;

    let chi = prepared.chi_all(&el.weights)?;
    let value = numeric::sum(chi.iter().copied()) / n;
    let e_chi2 = numeric::sum(chi.iter().map(|c| c * c)) / n;

    let obs = imp.observed_rows();
    let res = imp.residuals();
    let weight: Vec<f64> = obs.iter().map(|&j| el.weights[j] / kf).collect();
    let hbar = obs
        .par_iter()
        .map(|&j| prepared.hbar(res[j].eps))
        .collect::<Result<Vec<_>>>()?;

    let mut e_hbar2 = CompensatedSum::new();
    let mut e_eps_hbar = CompensatedSum::new();
    let mut sigma2 = CompensatedSum::new();
    for (t, &j) in obs.iter().enumerate() {
        let e = res[j].eps;
        e_hbar2.add(weight[t] * hbar[t] * hbar[t]);
        e_eps_hbar.add(weight[t] * e * (hbar[t] - value));
        sigma2.add(weight[t] * e * e);
    }
    let (e_hbar2, e_eps_hbar, sigma2) = (e_hbar2.value(), e_eps_hbar.value(), sigma2.value());
    if sigma2 <= 0.0 {
        return Err(Error::ZeroResidualVariance);
    }

    let p = m.n_params();
    let mut grads = vec![vec![0.0; p]; ds.len()];
    for (i, g) in grads.iter_mut().enumerate() {
        m.gradient_into(theta, ds.x(i), g)?;
    }
    let d_w: Vec<f64> = match (use_reductions, h.is_pure_response_linear()) {
        // D = E a(X) rdot(X)
        (true, true) => {
            let a = ds
                .rows()
                .map(|(x, _)| h.coefficient(x).expect("tagged functional"))
                .collect::<Result<Vec<_>>>()?;
            (0..p)
                .map(|c| numeric::sum(a.iter().zip(&grads).map(|(a, g)| a * g[c])) / n)
                .collect()
        }
        _ => {
            let mu: Vec<f64> = (0..p)
                .map(|c| numeric::sum(obs.iter().map(|&j| grads[j][c])) / kf)
                .collect();
            let centered_h = obs
                .iter()
                .map(|&j| prepared.observed_value(j).map(|v| v - value))
                .collect::<Result<Vec<_>>>()?;
            let ell: Vec<f64> = obs.par_iter().map(|&j| s.ell(res[j].eps)).collect();
            (0..p)
                .map(|c| {
                    let first = numeric::sum(
                        obs.iter()
                            .enumerate()
                            .map(|(t, &j)| weight[t] * centered_h[t] * (grads[j][c] - mu[c]) * ell[t]),
                    );
                    first + e_eps_hbar / sigma2 * mu[c]
                })
                .collect()
        }
    };

    let info = information(ds, m, theta, s)?;
    let efficiency_term = quadratic_form(&d_w, &info)?;
    let ez = kf / n;
    let e2_h = value * value;
    let assembled =
        e_chi2 + e_hbar2 / ez - (1.0 + 1.0 / ez) * e2_h - e_eps_hbar * e_eps_hbar / (sigma2 * ez) + efficiency_term;
    let clamped = assembled < 0.0;
    Ok(VarianceComponents {
        e_chi2,
        e_hbar2,
        e2_h,
        e_eps_hbar,
        sigma2,
        ez,
        d_w,
        m: info,
        efficiency_term,
        variance: assembled.max(0.0),
        clamped,
        value,
        el_status: el.status,
    })
}

/// Variance of the mean-response estimator with a scalar parameter:
/// `Var r(X) + D^2 / M` with `D = n^-1 sum rdot(X_i)`.
pub fn variance_mean_scalar(ds: &Dataset, m: &dyn RegressionModel, theta: &[f64], s: &ScoreModel) -> Result<f64> {
    if m.n_params() != 1 {
        return Err(Error::Unsupported(format!(
            "scalar mean-response variance needs one parameter, model has {}",
            m.n_params()
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidData("empty dataset".into()));
    }
    let n = ds.len() as f64;
    let mut r = Vec::with_capacity(ds.len());
    let mut g = Vec::with_capacity(ds.len());
    let mut buf = [0.0];
    for (x, _) in ds.rows() {
        r.push(m.value(theta, x)?);
        m.gradient_into(theta, x, &mut buf)?;
        g.push(buf[0]);
    }
    let mean_r = numeric::sum(r.iter().copied()) / n;
    let var_r = numeric::sum(r.iter().map(|v| (v - mean_r) * (v - mean_r))) / n;
    let d = numeric::sum(g.iter().copied()) / n;
    let info = information(ds, m, theta, s)?;
    Ok(var_r + quadratic_form(&[d], &info)?)
}

/// `value -/+ z_{alpha/2} sqrt(variance / n)`.
pub fn confidence_interval(value: f64, variance: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::InvalidData(format!(
            "variance must be non-negative, got {variance}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let half = normal_quantile(1.0 - alpha / 2.0) * (variance / n as f64).sqrt();
    Ok((value - half, value + half))
}

/// Standard normal quantile, Wichura's AS 241 (relative accuracy about 1e-16).
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let v = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

/// Weighted fully imputed estimate with its plug-in variance and interval.
pub fn estimate_with_interval(
    ds: &Dataset,
    m: &dyn RegressionModel,
    theta: &[f64],
    h: &Functional,
    s: &ScoreModel,
    alpha: f64,
) -> Result<FunctionalEstimate> {
    let components = variance_general(ds, m, theta, h, s)?;
    let (ci_low, ci_high) = confidence_interval(components.value, components.variance, ds.len(), alpha)?;
    Ok(FunctionalEstimate {
        value: components.value,
        variance: components.variance,
        ci_low,
        ci_high,
        alpha,
        n: ds.len(),
        method: Estimator::FiWeighted,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate;
    use crate::functional::parse_expression;
    use crate::model::{Linear, LinearIntercept};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    fn simulated(n: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut ds = Dataset::new(1).unwrap();
        for _ in 0..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            let observed = rng.random::<f64>() < 1.0 / (1.0 + (-x).exp());
            ds.push(&[x], observed.then_some(2.0 * x + e)).unwrap();
        }
        ds
    }

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.84) - 0.994_457_883_209_753_2).abs() < 1e-12);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    #[test]
    fn intervals() {
        assert_eq!(confidence_interval(3.0, 0.0, 10, 0.05).unwrap(), (3.0, 3.0));
        let (lo, hi) = confidence_interval(0.0, 1.0, 100, 0.05).unwrap();
        assert!((hi - 0.195_996).abs() < 1e-6 && (lo + 0.195_996).abs() < 1e-6);
        let (_, hi) = confidence_interval(0.0, 1.0, 1, 0.32).unwrap();
        assert!((hi - 0.99446).abs() < 1e-5);
        assert!(confidence_interval(0.0, -1.0, 1, 0.05).is_err());
        assert!(confidence_interval(0.0, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn hbar_examples() {
        let ds = Dataset::from_rows(1, [(vec![0.5], Some(1.0)), (vec![-0.5], None), (vec![0.25], None)]).unwrap();
        let m = Linear::new(1);
        let y = parse_expression("y", 1).unwrap();
        let y2 = parse_expression("y^2", 1).unwrap();
        let r = [1.0, -1.0, 0.5];
        let mean_r = r.iter().sum::<f64>() / 3.0;
        let mean_r2 = r.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((hbar_hat(0.3, &ds, &m, &[2.0], &y).unwrap() - (mean_r + 0.3)).abs() < 1e-15);
        let expected = mean_r2 + 2.0 * 0.3 * mean_r + 0.09;
        assert!((hbar_hat(0.3, &ds, &m, &[2.0], &y2).unwrap() - expected).abs() < 1e-15);
        let sym = Dataset::from_rows(1, [(vec![0.5], Some(1.0)), (vec![-0.5], None)]).unwrap();
        assert_eq!(hbar_hat(0.0, &sym, &m, &[2.0], &y).unwrap(), 0.0);
    }

    #[test]
    fn general_matches_scalar_and_generic_paths() {
        let ds = simulated(300, 11);
        let m = Linear::new(1);
        let theta = crate::param::fit_least_squares(&ds, &m, &[0.0], 100, 1e-10)
            .unwrap()
            .theta;
        let s = score_model_at(&ds, &m, &theta, &Bandwidths::default()).unwrap();
        let y = parse_expression("y", 1).unwrap();
        let general = variance_general(&ds, &m, &theta, &y, &s).unwrap();
        let scalar = variance_mean_scalar(&ds, &m, &theta, &s).unwrap();
        assert!(
            (general.variance - scalar).abs() <= 1e-8 * scalar,
            "{} {}",
            general.variance,
            scalar
        );
        let point = estimate(&ds, &m, &theta, &y, Estimator::FiWeighted, None).unwrap();
        assert!((general.value - point).abs() < 1e-12);
        let slow = variance_general_with(&ds, &m, &theta, &y, &s, false).unwrap();
        assert!((slow.e_chi2 - general.e_chi2).abs() < 1e-10);
        assert!((slow.e_hbar2 - general.e_hbar2).abs() < 1e-10);
    }

    #[test]
    fn constant_functional_has_zero_variance() {
        let ds = simulated(200, 4);
        let m = Linear::new(1);
        let s = score_model_at(&ds, &m, &[2.0], &Bandwidths::default()).unwrap();
        let c = parse_expression("3 + 0*y", 1).unwrap();
        let v = variance_general(&ds, &m, &[2.0], &c, &s).unwrap();
        assert!(v.variance < 1e-10, "{}", v.variance);
        assert!((v.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_grid_scalar_variance_is_sample_variance() {
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + (i as f64 + 0.5) / 20.0).collect();
        let ds = Dataset::from_rows(
            1,
            xs.iter()
                .enumerate()
                .map(|(i, &x)| (vec![x], Some(2.0 * x + if i % 2 == 0 { 0.7 } else { -0.7 }))),
        )
        .unwrap();
        let m = Linear::new(1);
        let s = score_model_at(&ds, &m, &[2.0], &Bandwidths::default()).unwrap();
        let v = variance_mean_scalar(&ds, &m, &[2.0], &s).unwrap();
        let var_r = xs.iter().map(|x| 4.0 * x * x).sum::<f64>() / 40.0;
        assert!((v - var_r).abs() < 1e-12);
    }

    #[test]
    fn constant_regression_has_zero_variance() {
        let ds = Dataset::from_rows(1, [(vec![0.1], Some(1.0)), (vec![0.5], Some(3.0)), (vec![0.9], None)]).unwrap();
        let flat = crate::model::CustomModel::new(1, "0*t1 + 2", &["0"]).unwrap();
        let s = score_model_at(&ds, &flat, &[5.0], &Bandwidths::default()).unwrap();
        assert_eq!(variance_mean_scalar(&ds, &flat, &[5.0], &s).unwrap(), 0.0);
        assert!(variance_mean_scalar(&ds, &LinearIntercept::new(1), &[0.0, 2.0], &s).is_err());
    }
}
