//! Functionals `h(x, y)` whose expectation is being estimated.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{BinOp, Env, Expr, Scope, Var};

/// Algebraic shape of a functional, detected syntactically at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalForm {
    /// `h(x, y) = a(x) * y`; the coefficient `a` does not involve `y`.
    PureResponseLinear {
        coefficient: Expr,
    },
    /// `h(x, y) = y^2`.
    SecondMoment,
    General,
}

impl FunctionalForm {
    pub fn tag(&self) -> &'static str {
        match self {
            FunctionalForm::PureResponseLinear { .. } => "PURE_RESPONSE_LINEAR",
            FunctionalForm::SecondMoment => "SECOND_MOMENT",
            FunctionalForm::General => "GENERAL",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Functional {
    source: String,
    expr: Expr,
    dim: usize,
    form: FunctionalForm,
}

/// Parses `src` as a functional of `dim` covariates and the response.
pub fn parse_expression(src: &str, dim: usize) -> Result<Functional> {
    Functional::parse(src, dim)
}

impl Functional {
    pub fn parse(src: &str, dim: usize) -> Result<Functional> {
        let expr = Expr::parse(src, Scope::functional(dim))?;
        Ok(Self::from_expr(src.trim().to_string(), expr, dim))
    }

    pub fn from_expr(source: String, expr: Expr, dim: usize) -> Functional {
        let form = detect_form(&expr);
        Functional {
            source,
            expr,
            dim,
            form,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &FunctionalForm {
        &self.form
    }

    pub fn is_pure_response_linear(&self) -> bool {
        matches!(self.form, FunctionalForm::PureResponseLinear { .. })
    }

    pub fn is_second_moment(&self) -> bool {
        matches!(self.form, FunctionalForm::SecondMoment)
    }

    /// `h(x, y)`.
    pub fn eval(&self, x: &[f64], y: f64) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "functional covariates",
                expected: self.dim,
                got: x.len(),
            });
        }
        self.eval_unchecked(x, y)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: f64) -> Result<f64> {
        self.expr.eval(&Env::new(x, y))
    }

    /// `a(x)` for a functional tagged pure-response-linear, `None` otherwise.
    pub fn coefficient(&self, x: &[f64]) -> Option<Result<f64>> {
        match &self.form {
            FunctionalForm::PureResponseLinear { coefficient } => Some(coefficient.eval(&Env::new(x, 0.0))),
            _ => None,
        }
    }
}

/// Evaluates `h(x, y)`.
pub fn eval_functional(h: &Functional, x: &[f64], y: f64) -> Result<f64> {
    h.eval(x, y)
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn detect_form(expr: &Expr) -> FunctionalForm {
    if is_square_of_response(expr) {
        return FunctionalForm::SecondMoment;
    }
    match response_coefficient(expr) {
        Some(coefficient) => FunctionalForm::PureResponseLinear { coefficient },
        None => FunctionalForm::General,
    }
}

fn is_response(e: &Expr) -> bool {
    matches!(e, Expr::Var(Var::Response))
}

fn is_square_of_response(e: &Expr) -> bool {
    match e {
        Expr::Bin(BinOp::Pow, base, exp) => is_response(base) && matches!(**exp, Expr::Num(v) if v == 2.0),
        Expr::Bin(BinOp::Mul, l, r) => is_response(l) && is_response(r),
        _ => false,
    }
}

/// Returns `a` when `e` is syntactically `a(x) * y`.
fn response_coefficient(e: &Expr) -> Option<Expr> {
    match e {
        Expr::Var(Var::Response) => Some(Expr::Num(1.0)),
        Expr::Neg(inner) => response_coefficient(inner).map(|a| Expr::Neg(Box::new(a))),
        Expr::Bin(BinOp::Mul, l, r) => {
            if !l.mentions_response() {
                response_coefficient(r).map(|a| mul(l.as_ref().clone(), a))
            } else if !r.mentions_response() {
                response_coefficient(l).map(|a| mul(a, r.as_ref().clone()))
            } else {
                None
            }
        }
        Expr::Bin(BinOp::Div, l, r) if !r.mentions_response() => {
            response_coefficient(l).map(|a| Expr::Bin(BinOp::Div, Box::new(a), Box::new(r.as_ref().clone())))
        }
        _ => None,
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(v), _) if *v == 1.0 => b,
        (_, Expr::Num(v)) if *v == 1.0 => a,
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}
