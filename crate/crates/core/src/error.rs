use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The requested singular subspace is not well defined at this tolerance.
    #[error("singular gap at index {index} is {gap:.3e}, below tolerance {tol:.1e}")]
    GapTooSmall { index: usize, gap: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("{what} exceeded budget of {limit}")]
    BudgetExceeded { what: &'static str, limit: usize },

    #[error("the dyadic cell of the query point carries no mass")]
    EmptyCell,

    #[error("entropy window holds {scales} scales, at least 4 are required")]
    WindowTooSmall { scales: usize },

    #[error("invalid `{field}`: {reason}")]
    InvariantViolation { field: String, reason: String },

    #[error("spec parse error at line {line}, column {column}: {message}")]
    SpecParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("raster output needs a target of dimension at most 2, got {0}")]
    DimTooHigh(usize),

    #[error("exact dyadic arithmetic lost precision while composing maps")]
    InexactArithmetic,

    #[error("malformed point-cloud file: {0}")]
    BadCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvariantViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
