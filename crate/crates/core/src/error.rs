use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("solver did not converge: {what} (residual {residual:e})")]
    Solver { what: String, residual: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("walk error: {0}")]
    Walk(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed{}: {source}", sample.as_ref().map(|s| format!(" on sample `{s}`")).unwrap_or_default())]
    Stage {
        stage: String,
        sample: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the pipeline stage (and optionally the sample) it came from.
    pub fn in_stage(self, stage: &str, sample: Option<&str>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            sample: sample.map(str::to_string),
            source: Box::new(self),
        }
    }
}
