use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {0}° outside [0°, 180°]")]
    AngleOutOfRange(f64),

    #[error("angle {0}° is not a grid angle")]
    OffGrid(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row}, condition estimate {condition:e})")]
    NotPositiveDefinite { row: usize, pivot: f64, condition: f64 },

    #[error("noise-variance update denominator {0:e} is not positive; model is over-parameterized")]
    OverParameterized(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
