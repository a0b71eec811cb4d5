use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("no valid rows in {0}")]
    EmptyData(String),

    #[error("degenerate feature `{0}`: max equals min over the fit range")]
    DegenerateFeature(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fold error: {0}")]
    Fold(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{arm} arm: {source}")]
    InArm {
        arm: String,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible model: {0}")]
    Compatibility(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    /// True when the root cause is numerical divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } => true,
            Error::InFold { source, .. } | Error::InArm { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
