//! A reduced run of the mean response study for r = 2x with half the
//! responses missing.

use mar_impute::cli::parse_config;
use mar_impute::simulation::run_mse_study;

fn main() -> mar_impute::Result<()> {
    let cfg = parse_config(
        "model = linear\ntheta = 2\nh = y\nn = 100\nreps = 400\nseed = 1\n\
         estimators = fi_weighted@ols, fi_weighted@true, pi_weighted@ols, pi@ols, ipw\n",
    )?;
    let report = run_mse_study(&cfg)?;
    println!("truth {}  reps {}  failed {}", report.truth, report.reps, report.failed);
    for s in &report.summaries {
        println!(
            "{:<20} mse {:.6}  (mc se {:.6})  n*mse {:.3}",
            s.spec.label(),
            s.mse,
            s.mc_se,
            s.mse * cfg.n as f64
        );
    }
    let fi = cfg.estimators[0];
    let ipw = cfg.estimators[4];
    let gap = report.paired_gap(fi, ipw).expect("both estimators present");
    println!("ipw - fi gap {:.6}, z = {:.1}", gap.diff, gap.z());
    Ok(())
}
