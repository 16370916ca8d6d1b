use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("malformed BRF header: {0}")]
    MalformedHeader(String),

    #[error("BRF payload length mismatch: header implies {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("unknown dtype {0:?} (supported: f32, u8)")]
    UnknownDtype(String),

    #[error("missing band {0}")]
    MissingBand(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("source id {0} already present in mask")]
    SourceIdCollision(u8),

    #[error("missing prediction files for samples: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),

    #[error("JSON error: {0}")]
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
