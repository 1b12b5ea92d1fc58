//! Kernel estimate of the location score -f'/f from standard normal
//! residuals, where the true score is the identity.

use mar_impute::param::{Bandwidths, ScoreModel};
use mar_impute::Residual;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mar_impute::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let res: Vec<Residual> = (0..2000)
        .map(|_| Residual::observed(StandardNormal.sample(&mut rng)))
        .collect();
    let s = ScoreModel::from_residuals(&res, &Bandwidths::default())?;
    println!("a = {:.4}, b = {:.2e}", s.a(), s.b());
    println!("{:>6} {:>10} {:>10} {:>10}", "e", "f", "ell", "true");
    for e in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
        let v = s.eval(e);
        let f_true = (-0.5 * e * e).exp() / (2.0 * std::f64::consts::PI).sqrt();
        println!(
            "{e:>6.2} {:>10.5} {:>10.5} {:>10.5}  (f true {f_true:.5})",
            v.f, v.ell, e
        );
    }
    Ok(())
}
