use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("trajectory diverged at step {step} (|u| = {magnitude:e})")]
    Divergence { step: usize, magnitude: f64 },

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("reservoir construction failed: {0}")]
    ReservoirBuild(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("failed to parse {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse {
            context: "csv".into(),
            message: err.to_string(),
        }
    }
}
