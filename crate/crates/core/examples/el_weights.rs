//! Empirical likelihood weights for a handful of residuals, two of them
//! belonging to rows with a missing response.

use mar_impute::el::{default_tolerance, diagnostics, DEFAULT_MAX_ITER};
use mar_impute::{solve_lagrange, Residual};

fn main() -> mar_impute::Result<()> {
    let residuals = vec![
        Residual::observed(0.8),
        Residual::observed(-0.3),
        Residual::missing(),
        Residual::observed(1.1),
        Residual::observed(-0.4),
        Residual::missing(),
    ];
    let tol = default_tolerance(&residuals);
    let w = solve_lagrange(&residuals, tol, DEFAULT_MAX_ITER)?;

    println!("lambda = {:.10} ({:?})", w.lambda, w.status);
    for (r, wj) in residuals.iter().zip(&w.weights) {
        println!("  z*eps = {:>6.2}  w = {:.6}", r.z_eps(), wj);
    }
    let d = diagnostics(&residuals, &w, residuals.len());
    println!("sum w = {:.12}", d.sum_weights);
    println!("sum w z eps = {:.3e}", w.constraint_residual);

    // all residuals positive: no tilt can center them
    let one_sided = vec![Residual::observed(0.5), Residual::observed(1.5)];
    let w = solve_lagrange(&one_sided, default_tolerance(&one_sided), DEFAULT_MAX_ITER)?;
    println!("one-sided residuals -> {:?}, weights {:?}", w.status, w.weights);
    Ok(())
}
