use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid body model: {0}")]
    BodyModel(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("non-finite parameter on gaussian {index}: {what}")]
    NonFinite { index: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed ply: {0}")]
    Ply(String),

    #[error("refiner `{refiner}` failed on view {view}: {message}")]
    Refiner {
        refiner: String,
        view: usize,
        message: String,
    },

    #[error("non-finite loss at iteration {iteration} (view {view})")]
    Divergence { iteration: usize, view: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
