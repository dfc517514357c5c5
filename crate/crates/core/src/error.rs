use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    Asymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: String, actual: String },

    #[error("matrix is numerically singular (min |eigenvalue| {min_abs_eig:e}, max {max_abs_eig:e})")]
    SingularMatrix { min_abs_eig: f64, max_abs_eig: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("series {0} has zero variance")]
    ZeroVariance(usize),

    #[error("diagonal entry {0} is not positive")]
    BadDiagonal(usize),

    #[error("invalid lag {lag} for series of length {n}")]
    BadLag { lag: usize, n: usize },

    #[error("invalid parameter: {0}")]
    BadParam(String),

    #[error("invalid input: {0}")]
    BadInput(String),

    #[error("constraint set is empty (constraint level {lambda1} too small)")]
    Infeasible { lambda1: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("column {index}: {source}")]
    Column { index: usize, source: Box<Error> },

    #[error("value {value} outside admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("only {usable} usable lags, need at least 3")]
    TooFewLags { usable: usize },

    #[error("Gamma_SS is singular")]
    SingularGammaSS,

    #[error("exponential-sum fit failed: max relative error {max_rel_err:e}")]
    FitFailed { max_rel_err: f64 },

    #[error("n = {n} too small for h1 = {h1} blocks")]
    TooSmall { n: usize, h1: usize },

    #[error("estimate is not positive definite (split {split}, tuning value {value})")]
    IndefiniteEstimate { split: usize, value: f64 },

    #[error("benchmark aborted: {failures} of {replications} replications failed; first error: {first}")]
    BenchAborted {
        failures: usize,
        replications: usize,
        first: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Variant name, used as a stable machine-readable code.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "NonFinite",
            Error::Asymmetric { .. } => "Asymmetric",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::TooLarge(_) => "TooLarge",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::ZeroVariance(_) => "ZeroVariance",
            Error::BadDiagonal(_) => "BadDiagonal",
            Error::BadLag { .. } => "BadLag",
            Error::BadParam(_) => "BadParam",
            Error::BadInput(_) => "BadInput",
            Error::Infeasible { .. } => "Infeasible",
            Error::NotConverged { .. } => "NotConverged",
            Error::Column { .. } => "Column",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::TooFewLags { .. } => "TooFewLags",
            Error::SingularGammaSS => "SingularGammaSS",
            Error::FitFailed { .. } => "FitFailed",
            Error::TooSmall { .. } => "TooSmall",
            Error::IndefiniteEstimate { .. } => "IndefiniteEstimate",
            Error::BenchAborted { .. } => "BenchAborted",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}
