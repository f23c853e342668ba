use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("size mismatch: expected {expected}, found {found}")]
    Mismatch { expected: usize, found: usize },

    /// The reconstruction system is singular or too ill-conditioned to trust,
    /// i.e. the measurement ensemble is not tomographically complete.
    #[error("tomographically incomplete ensemble (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("gate {0} is not a Clifford gate")]
    NotClifford(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("too few usable points: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
