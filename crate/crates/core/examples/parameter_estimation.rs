//! Least squares against the one-step efficient estimator in the cosine
//! model, under normal and under t(3) errors.

use mar_impute::cli::parse_config;
use mar_impute::param::{efficient_theta, fit_least_squares};
use mar_impute::simulation::generate_dataset;

fn main() -> mar_impute::Result<()> {
    for errors in ["normal", "t:3"] {
        let cfg = parse_config(&format!(
            "model = cosine\ntheta = 2\nh = y\nn = 400\nerrors = {errors}\nseed = 11\n"
        ))?;
        let (mut se_ols, mut se_one) = (0.0, 0.0);
        let reps = 100;
        for rep in 0..reps {
            let ds = generate_dataset(&cfg, &mut cfg.rng(rep))?;
            let m = cfg.model.as_ref();
            let ols = fit_least_squares(&ds, m, &cfg.theta, 100, 1e-10)?;
            let one = efficient_theta(&ds, m, &cfg.theta, &cfg.one_step)?;
            se_ols += (ols.theta[0] - 2.0).powi(2);
            se_one += (one.theta[0] - 2.0).powi(2);
        }
        println!(
            "{errors:<7} mse(ols) = {:.6}  mse(one-step) = {:.6}  ratio = {:.3}",
            se_ols / reps as f64,
            se_one / reps as f64,
            se_one / se_ols
        );
    }
    Ok(())
}
