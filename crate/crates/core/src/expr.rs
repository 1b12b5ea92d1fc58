//! A small arithmetic expression language used to write functionals
//! `h(x, y)`, covariate weights `a(x)`, propensities `pi(x)` and custom
//! regression functions.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" unary ] ;             (* right associative *)
//! atom    = number | variable | func "(" expr ")" | "(" expr ")" ;
//! func    = "exp" | "log" | "cos" | "sin" | "abs" | "sqrt" ;
//! variable = "x" digits | "y" | "t" digits ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ ... ] ;
//! ```
//!
//! `x1..xd` are covariates, `y` the response and `t1..tp` regression
//! parameters. Which of them may appear is decided by the [`Scope`] handed to
//! the parser.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Cos,
    Sin,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Variables are stored zero-based; `x1` is `Covariate(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Covariate(usize),
    Response,
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Which identifiers an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub covariates: usize,
    pub response: bool,
    pub params: usize,
}

impl Scope {
    /// Scope of a functional `h(x, y)` with `d` covariates.
    pub fn functional(covariates: usize) -> Self {
        Scope {
            covariates,
            response: true,
            params: 0,
        }
    }

    /// Scope of a function of the covariates only.
    pub fn covariates(covariates: usize) -> Self {
        Scope {
            covariates,
            response: false,
            params: 0,
        }
    }

    /// Scope of a regression function `r(theta, x)` or one of its partial derivatives.
    pub fn model(covariates: usize, params: usize) -> Self {
        Scope {
            covariates,
            response: false,
            params,
        }
    }
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub theta: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn new(x: &'a [f64], y: f64) -> Self {
        Env { x, y, theta: &[] }
    }

    pub fn with_theta(x: &'a [f64], theta: &'a [f64]) -> Self {
        Env { x, y: 0.0, theta }
    }
}

impl Expr {
    pub fn parse(src: &str, scope: Scope) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut parser = Parser {
            tokens,
            cursor: 0,
            scope,
            end: src.chars().count() + 1,
        };
        let expr = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(Error::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(expr)
    }

    /// Evaluates the expression. Domain violations (log of a non-positive
    /// number, division by zero, ...) and non-finite results are errors.
    pub fn eval(&self, env: &Env<'_>) -> Result<f64> {
        let v = self.eval_inner(env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite result evaluating `{self}`")))
        }
    }

    fn eval_inner(&self, env: &Env<'_>) -> Result<f64> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(Var::Covariate(i)) => env.x.get(*i).copied().ok_or(Error::DimensionMismatch {
                what: "covariate vector",
                expected: i + 1,
                got: env.x.len(),
            }),
            Expr::Var(Var::Response) => Ok(env.y),
            Expr::Var(Var::Param(i)) => env.theta.get(*i).copied().ok_or(Error::DimensionMismatch {
                what: "parameter vector",
                expected: i + 1,
                got: env.theta.len(),
            }),
            Expr::Neg(e) => Ok(-e.eval_inner(env)?),
            Expr::Bin(op, l, r) => {
                let a = l.eval_inner(env)?;
                let b = r.eval_inner(env)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(Error::Domain("division by zero".into()))
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => power(a, b),
                }
            }
            Expr::Call(f, arg) => {
                let v = arg.eval_inner(env)?;
                match f {
                    Func::Exp => Ok(v.exp()),
                    Func::Log => {
                        if v <= 0.0 {
                            Err(Error::Domain(format!("log of non-positive value {v}")))
                        } else {
                            Ok(v.ln())
                        }
                    }
                    Func::Cos => Ok(v.cos()),
                    Func::Sin => Ok(v.sin()),
                    Func::Abs => Ok(v.abs()),
                    Func::Sqrt => {
                        if v < 0.0 {
                            Err(Error::Domain(format!("sqrt of negative value {v}")))
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                }
            }
        }
    }

    pub fn mentions(&self, var: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => var(*v),
            Expr::Neg(e) | Expr::Call(_, e) => e.mentions(var),
            Expr::Bin(_, l, r) => l.mentions(var) || r.mentions(var),
        }
    }

    pub fn mentions_response(&self) -> bool {
        self.mentions(&|v| v == Var::Response)
    }
}

fn power(base: f64, exponent: f64) -> Result<f64> {
    if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
        if base == 0.0 && exponent < 0.0 {
            return Err(Error::Domain("zero raised to a negative power".into()));
        }
        return Ok(base.powi(exponent as i32));
    }
    if base < 0.0 {
        return Err(Error::Domain(format!(
            "negative base {base} with non-integer exponent {exponent}"
        )));
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(Error::Domain("zero raised to a negative power".into()));
    }
    Ok(base.powf(exponent))
}

impl fmt::Display for Expr {
    /// Fully parenthesized form; re-parsing it yields an identical tree value-wise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{})", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::Covariate(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Response) => write!(f, "y"),
            Expr::Var(Var::Param(i)) => write!(f, "t{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("operator `{c}`"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    /// 1-based character column
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                pos,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                kind: TokenKind::Num(value),
                pos,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                pos,
            });
        } else {
            let kind = match c {
                '+' | '-' | '*' | '/' | '^' => TokenKind::Op(c),
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                _ => {
                    return Err(Error::Syntax {
                        pos,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push(Token { kind, pos });
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    cursor: usize,
    scope: Scope,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.cursor).cloned();
        self.cursor += 1;
        tok
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.cursor += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.cursor += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.cursor += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.cursor += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self, open_pos: usize) -> Result<()> {
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(tok) => Err(Error::Syntax {
                pos: tok.pos,
                msg: format!("expected `)` to close `(` at {open_pos}, found {}", tok.kind.describe()),
            }),
            None => Err(Error::Syntax {
                pos: self.end,
                msg: format!("unclosed `(` opened at {open_pos}"),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.next().ok_or(Error::Syntax {
            pos: self.end,
            msg: "unexpected end of input".into(),
        })?;
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen(tok.pos)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    match self.next() {
                        Some(Token {
                            kind: TokenKind::LParen,
                            pos,
                        }) => {
                            let arg = self.expr()?;
                            self.expect_rparen(pos)?;
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        _ => Err(Error::Syntax {
                            pos: tok.pos,
                            msg: format!("function `{name}` must be followed by `(`"),
                        }),
                    }
                } else {
                    self.variable(&name, tok.pos).map(Expr::Var)
                }
            }
            other => Err(Error::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Var> {
        let unknown = || Error::UnknownIdentifier {
            name: name.to_string(),
            pos,
        };
        if name == "y" {
            return if self.scope.response {
                Ok(Var::Response)
            } else {
                Err(unknown())
            };
        }
        let (prefix, digits) = name.split_at(1);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        if index == 0 {
            return Err(unknown());
        }
        match prefix {
            "x" => {
                if index > self.scope.covariates {
                    Err(Error::VariableOutOfRange {
                        name: name.to_string(),
                        limit: self.scope.covariates,
                    })
                } else {
                    Ok(Var::Covariate(index - 1))
                }
            }
            "t" if self.scope.params > 0 => {
                if index > self.scope.params {
                    Err(Error::VariableOutOfRange {
                        name: name.to_string(),
                        limit: self.scope.params,
                    })
                } else {
                    Ok(Var::Param(index - 1))
                }
            }
            _ => Err(unknown()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(src: &str, x: &[f64], y: f64) -> Result<f64> {
        Expr::parse(src, Scope::functional(x.len()))?.eval(&Env::new(x, y))
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval_str("1 + 2 * 3", &[], 0.0).unwrap(), 7.0);
        assert_eq!(eval_str("2 ^ 3 ^ 2", &[], 0.0).unwrap(), 512.0);
        assert_eq!(eval_str("-2 ^ 2", &[], 0.0).unwrap(), -4.0);
        assert_eq!(eval_str("8 / 4 / 2", &[], 0.0).unwrap(), 1.0);
        assert_eq!(eval_str("10 - 4 - 3", &[], 0.0).unwrap(), 3.0);
        assert_eq!(eval_str("2 * -y", &[], 3.0).unwrap(), -6.0);
        assert_eq!(eval_str("1.5e2 + .5", &[], 0.0).unwrap(), 150.5);
    }

    #[test]
    fn functions() {
        assert_eq!(eval_str("cos(2*x1)", &[0.0], 5.0).unwrap(), 1.0);
        assert_eq!(eval_str("x1*exp(x1*y)", &[1.0], 0.0).unwrap(), 1.0);
        assert_eq!(eval_str("sqrt(abs(-16))", &[], 0.0).unwrap(), 4.0);
        assert!((eval_str("log(exp(2.5))", &[], 0.0).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_are_reported() {
        assert!(matches!(eval_str("log(y)", &[], 0.0), Err(Error::Domain(_))));
        assert!(matches!(eval_str("log(y)", &[], -1.0), Err(Error::Domain(_))));
        assert!(matches!(eval_str("1/y", &[], 0.0), Err(Error::Domain(_))));
        assert!(matches!(eval_str("sqrt(y)", &[], -1.0), Err(Error::Domain(_))));
        assert!(matches!(eval_str("y^0.5", &[], -1.0), Err(Error::Domain(_))));
        assert!(matches!(eval_str("exp(y)", &[], 1000.0), Err(Error::Domain(_))));
    }

    #[test]
    fn parse_errors_carry_positions() {
        match Expr::parse("1 + * 2", Scope::functional(1)) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        match Expr::parse("(1 + 2", Scope::functional(1)) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Expr::parse("foo + 1", Scope::functional(1)),
            Err(Error::UnknownIdentifier { pos: 1, .. })
        ));
        assert!(matches!(
            Expr::parse("x3", Scope::functional(2)),
            Err(Error::VariableOutOfRange { limit: 2, .. })
        ));
        assert!(matches!(
            Expr::parse("x0", Scope::functional(2)),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("y", Scope::covariates(2)),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("exp 2", Scope::functional(1)),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            Expr::parse("2 $ 3", Scope::functional(1)),
            Err(Error::Syntax { pos: 3, .. })
        ));
        assert!(matches!(
            Expr::parse("1 2", Scope::functional(1)),
            Err(Error::Syntax { pos: 3, .. })
        ));
    }

    #[test]
    fn parameters_only_in_model_scope() {
        let e = Expr::parse("cos(t1*x1)", Scope::model(1, 1)).unwrap();
        assert_eq!(e.eval(&Env::with_theta(&[0.0], &[2.0])).unwrap(), 1.0);
        assert!(Expr::parse("t1", Scope::functional(1)).is_err());
        assert!(matches!(
            Expr::parse("t2", Scope::model(1, 1)),
            Err(Error::VariableOutOfRange { .. })
        ));
    }

    #[test]
    fn display_reparses() {
        let e = Expr::parse("-x1^2 + 3*exp(-y)/(1 - -2.5)", Scope::functional(1)).unwrap();
        let again = Expr::parse(&e.to_string(), Scope::functional(1)).unwrap();
        let env = Env::new(&[0.7], 1.3);
        assert_eq!(e.eval(&env).unwrap(), again.eval(&env).unwrap());
    }
}
