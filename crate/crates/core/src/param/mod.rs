//! Estimation of the regression parameter from the complete cases.

mod least_squares;
mod score;

pub use least_squares::{discretize_theta, fit_least_squares, objective};
pub use score::{
    efficient_theta, kernel, kernel_derivative, one_step_efficient, score_estimate, zeta_hat, Bandwidths,
    OneStepOptions, ScoreModel, ScoreValue, Zeta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaMethod {
    Ols,
    OneStepEfficient,
    FixedTrue,
}

impl ThetaMethod {
    pub fn label(self) -> &'static str {
        match self {
            ThetaMethod::Ols => "ols",
            ThetaMethod::OneStepEfficient => "onestep",
            ThetaMethod::FixedTrue => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub theta: Vec<f64>,
    pub method: ThetaMethod,
    pub iterations: usize,
    pub converged: bool,
    /// The discretized preliminary estimate a one-step update started from.
    pub preliminary: Option<Vec<f64>>,
}

impl ThetaEstimate {
    pub fn fixed(theta: Vec<f64>) -> ThetaEstimate {
        ThetaEstimate {
            theta,
            method: ThetaMethod::FixedTrue,
            iterations: 0,
            converged: true,
            preliminary: None,
        }
    }
}
