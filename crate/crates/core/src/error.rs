use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or corrupt image {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("point maps to infinity (homogeneous scale {0:e})")]
    PointAtInfinity(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("foreground cutout {index} does not fit inside the scene: {message}")]
    Placement { index: usize, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("detector adapter timed out after {0:?}")]
    AdapterTimeout(std::time::Duration),

    #[error("detector adapter exited: {0}")]
    AdapterDead(String),

    #[error("protocol error: {message} (payload: {raw})")]
    Protocol { message: String, raw: String },

    #[error("detector failed on {context}: {source}")]
    Detector {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn degenerate(message: impl Into<String>) -> Self {
        Error::DegenerateGeometry(message.into())
    }

    /// True for failures that originate from an external detector adapter.
    pub fn is_adapter_failure(&self) -> bool {
        match self {
            Error::AdapterTimeout(_) | Error::AdapterDead(_) | Error::Protocol { .. } => true,
            Error::Detector { source, .. } => source.is_adapter_failure(),
            _ => false,
        }
    }
}
