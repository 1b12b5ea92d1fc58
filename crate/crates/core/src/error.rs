use thiserror::Error;

/// Coarse failure class, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Parse,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Io => 2,
            ErrorClass::Parse => 3,
            ErrorClass::Numeric => 4,
        }
    }

    /// Machine-greppable prefix printed in front of diagnostics.
    pub fn prefix(self) -> &'static str {
        match self {
            ErrorClass::Io => "E_IO",
            ErrorClass::Parse => "E_PARSE",
            ErrorClass::Numeric => "E_NUMERIC",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("variable `{name}` exceeds declared dimension {limit}")]
    VariableOutOfRange { name: String, limit: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown regression model `{0}`")]
    UnknownModel(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("no observed responses")]
    NoObservedResponses,

    #[error("non-finite input at index {0}")]
    NonFiniteInput(usize),

    #[error("weight positivity violated at index {index}: 1 + lambda*z*eps = {value}")]
    WeightPositivity { index: usize, value: f64 },

    #[error("Lagrange solver did not converge after {iterations} iterations; bracket [{lo}, {hi}]")]
    SolverNonConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("singular or ill-conditioned matrix (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("residual variance is zero")]
    ZeroResidualVariance,

    #[error("estimator {0} requires a propensity function")]
    MissingPropensity(&'static str),

    #[error("estimator {method} requires a functional tagged {required}")]
    TagMismatch {
        method: &'static str,
        required: &'static str,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("simulation failed: {failed} of {total} replications flagged (limit 1%); first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },

    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    #[error("{msg} (line {line})")]
    Csv { line: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) => ErrorClass::Io,
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::VariableOutOfRange { .. }
            | Error::UnknownModel(_)
            | Error::InvalidData(_)
            | Error::MissingPropensity(_)
            | Error::TagMismatch { .. }
            | Error::Config { .. }
            | Error::Csv { .. }
            | Error::DimensionMismatch { .. }
            | Error::Unsupported(_) => ErrorClass::Parse,
            Error::Domain(_)
            | Error::NoObservedResponses
            | Error::NonFiniteInput(_)
            | Error::WeightPositivity { .. }
            | Error::SolverNonConvergence { .. }
            | Error::Singular { .. }
            | Error::ZeroResidualVariance
            | Error::TooManyFailures { .. } => ErrorClass::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
