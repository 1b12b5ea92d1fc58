//! Efficient estimation of `E h(X, Y)` when responses are missing at random
//! and follow a parametric regression with an unspecified error law.
//!
//! The pipeline is: fit the regression on the observed rows
//! ([`param::fit_least_squares`], optionally improved with
//! [`param::one_step_efficient`]), reweight the residuals with empirical
//! likelihood ([`el::solve_lagrange`]), and average the imputed conditional
//! expectations ([`estimators::estimate`]). [`inference`] provides plug-in
//! variances and intervals, [`simulation`] the Monte Carlo studies.

pub mod cli;
pub mod data;
pub mod el;
pub mod error;
pub mod estimators;
pub mod expr;
pub mod functional;
pub mod inference;
pub mod model;
pub mod numeric;
pub mod param;
pub mod simulation;

pub use data::{Dataset, Residual};
pub use el::{solve_lagrange, ElStatus, ElWeights};
pub use error::{Error, ErrorClass, Result};
pub use estimators::{chi_hat, estimate, Estimator, Propensity};
pub use functional::{eval_functional, parse_expression, Functional, FunctionalForm};
pub use model::{builtin_model, eval_gradient, eval_regression, RegressionModel, SharedModel};
