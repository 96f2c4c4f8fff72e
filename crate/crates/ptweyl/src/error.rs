use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("eigensolver failed on {descriptor}: {source}")]
    Solver {
        descriptor: String,
        #[source]
        source: ndarray_linalg::error::LinalgError,
    },

    #[error("rank-deficient input: only {independent} of {total} vectors are independent")]
    RankDeficient { independent: usize, total: usize },

    #[error(
        "symmetry violation: {unmatched} of {total} eigenvalues have no inverse-conjugate \
         partner within {tol:.3e} (worst mismatch {worst:.3e})"
    )]
    PairingViolation {
        unmatched: usize,
        total: usize,
        tol: f64,
        worst: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest inconsistency: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
