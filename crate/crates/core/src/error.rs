use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite after jitter schedule exhausted (last jitter {0:e})")]
    NotFactorizable(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("symmetric eigensolver did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("order {order} exceeds dimension {dim}")]
    OrderExceedsDimension { order: usize, dim: usize },

    #[error("enumeration of {0} terms exceeds the allowed size")]
    TooLarge(u128),

    #[error("invalid subset: {0}")]
    BadSubset(String),

    #[error("constant (degenerate) feature columns: {0:?}")]
    DegenerateColumn(Vec<usize>),

    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("empty lambda grid")]
    EmptyGrid,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lambda must be positive, got {0}")]
    LambdaNonPositive(f64),

    #[error("eigenvalue tail sum does not converge: {0}")]
    TailNotConvergent(String),

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("missing target column {0:?}")]
    MissingTarget(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },

    #[error("empty file")]
    EmptyFile,

    #[error("secular equation has no positive root")]
    SecularNoRoot,

    #[error("maximum iterations ({0}) reached")]
    MaxIterations(usize),

    #[error("unsupported model format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
