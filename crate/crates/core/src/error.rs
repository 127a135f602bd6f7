use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical error: {0}")]
    NumericalError(String),

    /// A batch whose self-dependence vanishes (e.g. a constant subspace).
    /// Callers are expected to skip the dependence penalty for that batch.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("contingency cell (y1={y1}, y2={y2}) is empty")]
    EmptyCell { y1: u8, y2: u8 },

    #[error("no records to report")]
    EmptyReport,

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
