//! Point estimate, plug-in variance and 95% interval for E[Y] and E[Y^2].

use mar_impute::cli::parse_config;
use mar_impute::inference::{estimate_with_interval, score_model_at};
use mar_impute::param::fit_least_squares;
use mar_impute::parse_expression;
use mar_impute::simulation::generate_dataset;

fn main() -> mar_impute::Result<()> {
    let cfg = parse_config("model = linear\ntheta = 2\nh = y\nn = 500\nseed = 5\n")?;
    let ds = generate_dataset(&cfg, &mut cfg.rng(0))?;
    let m = cfg.model.as_ref();
    let theta = fit_least_squares(&ds, m, &cfg.theta, 100, 1e-10)?.theta;
    let s = score_model_at(&ds, m, &theta, &cfg.one_step.bandwidths)?;

    for (src, truth) in [("y", 0.0), ("y^2", 7.0 / 3.0)] {
        let h = parse_expression(src, 1)?;
        let fe = estimate_with_interval(&ds, m, &theta, &h, &s, 0.05)?;
        println!(
            "E[{src}]: {:.5}  variance {:.4}  CI ({:.5}, {:.5})  truth {truth:.5}",
            fe.value, fe.variance, fe.ci_low, fe.ci_high
        );
        let c = &fe.components;
        println!(
            "   E chi^2 {:.4}, E hbar^2 {:.4}, E Z {:.3}, D'M^-1 D {:.4}",
            c.e_chi2, c.e_hbar2, c.ez, c.efficiency_term
        );
    }
    Ok(())
}
