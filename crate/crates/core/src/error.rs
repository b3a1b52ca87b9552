use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("optimization diverged at step {step}: {reason}")]
    Optimization { step: usize, reason: String },

    #[error("atlas quality error: {0}")]
    AtlasQuality(String),

    #[error("atlas validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed (last checkpoint: {checkpoint}): {source}")]
    Stage {
        stage: String,
        checkpoint: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
