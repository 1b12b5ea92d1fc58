//! All point estimators of E[X exp(XY)] on one simulated sample from the
//! linear design with half the responses missing.

use mar_impute::cli::parse_config;
use mar_impute::estimators::{estimate_prepared, EstimateOptions, Imputation};
use mar_impute::param::fit_least_squares;
use mar_impute::simulation::{generate_dataset, true_functional_value};
use mar_impute::{parse_expression, Estimator};

fn main() -> mar_impute::Result<()> {
    let cfg = parse_config("model = linear\ntheta = 2\nh = x1*exp(x1*y)\nn = 200\nseed = 7\n")?;
    let ds = generate_dataset(&cfg, &mut cfg.rng(0))?;
    println!("n = {}, observed = {}", ds.len(), ds.n_observed());

    let fit = fit_least_squares(&ds, cfg.model.as_ref(), &cfg.theta, 100, 1e-10)?;
    println!("least squares theta = {:.6}", fit.theta[0]);

    let imp = Imputation::new(&ds, cfg.model.as_ref(), &fit.theta)?;
    let pi = cfg.missing.propensity(ds.dim());
    let h = &cfg.h;
    for m in [
        Estimator::FiWeighted,
        Estimator::FiUnweighted,
        Estimator::PartiallyImputed,
        Estimator::PartiallyImputedWeighted,
        Estimator::IpwNaive,
    ] {
        let v = estimate_prepared(&imp, h, m, Some(&pi), &EstimateOptions::default())?;
        println!("{:<14} {:>10.6}", m.label(), v);
    }
    println!("{:<14} {:>10.6}", "truth", true_functional_value(&cfg)?);

    // h = y reduces to the mean of the fitted values
    let y = parse_expression("y", 1)?;
    let fi = estimate_prepared(&imp, &y, Estimator::FiWeighted, None, &EstimateOptions::default())?;
    let fast = estimate_prepared(&imp, &y, Estimator::MeanResponseFast, None, &EstimateOptions::default())?;
    println!("E[Y]: weighted {fi:.12}, fast path {fast:.12}");
    Ok(())
}
