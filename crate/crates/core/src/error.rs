use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument violates its documented bounds.
    #[error("specification error: {0}")]
    Spec(String),

    /// Input data is unusable (non-finite, unnormalized, malformed file body).
    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// An object was used in a state that forbids the operation (e.g. a consumed tape).
    #[error("state error: {0}")]
    State(String),

    /// Non-finite loss or gradient during training.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error on \"{axis}\": {message}")]
    Validation { axis: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(axis: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            axis: axis.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
