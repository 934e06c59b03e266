use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite payload")]
    NonFinitePayload,
    #[error("not an embedding store: {0}")]
    NotAStore(PathBuf),
    #[error("truncated payload: header declares {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("degenerate ensemble for class {class}")]
    DegenerateEnsemble { class: usize },
    #[error("selection requires labels")]
    SelectionRequiresLabels,
    #[error("diverged: non-finite gradient at step {step}")]
    Diverged { step: u64 },
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("embeddings are not flagged unit-normalized")]
    NotNormalized,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
