use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature budget exhausted after {intervals} intervals (error estimate {error:e})")]
    QuadratureBudget { intervals: usize, error: f64 },

    #[error("loss of precision: {0}")]
    LossOfPrecision(String),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("symplectic condition violated: deviation {0:e}")]
    SymplecticViolation(f64),

    #[error("malformed document: {0}")]
    Document(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures caused by a numerical budget rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureBudget { .. }
                | Error::LossOfPrecision(_)
                | Error::IllConditioned(_)
                | Error::SymplecticViolation(_)
        )
    }
}
