use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data breaks an invariant (non-finite values, bad labels, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Caller-supplied configuration is invalid or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A payload file does not hold the number of bytes the manifest implies.
    #[error("size mismatch in {file}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        file: String,
        expected: u64,
        found: u64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Every instance had a clean score at or below the skip threshold.
    #[error("degenerate scores: all {0} instances skipped")]
    DegenerateScores(usize),

    /// No replacement mask survived the random-baseline margin filter.
    #[error("flat rank: every mask was discarded by the margin filter")]
    FlatRank,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from caller configuration rather than a
    /// runtime condition. Drives the CLI exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Validation(_) | Error::Dimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
