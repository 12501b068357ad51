use thiserror::Error;

pub type Result<T> = std::result::Result<T, KivError>;

#[derive(Debug, Error)]
pub enum KivError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("factorization failed after jitter ladder (largest jitter {max_jitter:e})")]
    FactorizationFailure { max_jitter: f64 },

    #[error("normal equations are rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KivError {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        KivError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
