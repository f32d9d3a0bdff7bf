use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("holdout error: user has {0} interaction(s), need at least 2")]
    Holdout(usize),

    #[error("degenerate degree: {what} {index} has zero degree")]
    DegenerateDegree { what: &'static str, index: usize },

    #[error("degenerate row {0}: zero variance")]
    DegenerateRow(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("kernel domain error: {0}")]
    KernelDomain(String),

    #[error("bandlimit error: no eigenvalue at or below omega = {0}")]
    Bandlimit(f64),

    #[error("bound undefined: {0}")]
    BoundUndefined(String),

    #[error("interpolation error: {0}")]
    Interpolation(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(expected: usize, actual: usize) -> Self {
        Error::Dimension { expected, actual }
    }
}
