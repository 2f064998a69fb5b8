use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("invalid record: {0}")]
    Invalid(String),

    #[error("prompt rendering refused: {0}")]
    Render(String),

    #[error("backend failure: {0}")]
    Backend(#[from] crate::backend::BackendError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("run interrupted after {completed} completed units in {stage}")]
    Interrupted { stage: String, completed: usize },

    #[error("{0}")]
    Metric(#[from] crate::metrics::MetricError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
