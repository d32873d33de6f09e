use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the library.
///
/// Variants are grouped so the command-line front end can map them onto
/// its exit codes: usage problems, data/config problems, numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: csv: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: label out of range: {detail}")]
    LabelOutOfRange {
        path: PathBuf,
        line: u64,
        detail: String,
    },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: u64,
        detail: String,
    },

    #[error("unsupported label scheme transition {from:?} -> {to:?}")]
    UnsupportedTransition {
        from: crate::corpus::Scheme,
        to: crate::corpus::Scheme,
    },

    #[error("mixed label schemes: {0}")]
    MixedSchemes(String),

    #[error("example {index} has no date")]
    MissingDate { index: usize },

    #[error("not enough examples: {0}")]
    InsufficientData(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    ModelVersion { found: u16, expected: u16 },

    #[error("model/input mismatch: {0}")]
    ModelMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}
