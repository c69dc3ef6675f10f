use std::path::PathBuf;

use thiserror::Error;

pub type Shape = (usize, usize);

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum PcError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("matrix is singular to working precision (pivot magnitude {pivot:e} at column {column})")]
    Singular { pivot: f64, column: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("relaxation diverged at step {step}: total energy {energy:e}")]
    Divergence { step: usize, energy: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("dimension {dim} exceeds the cap of {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("cross-entropy targets must be one-hot (row {row} is not)")]
    NotOneHot { row: usize },

    #[error("{path}: bad magic number at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated file: needed {needed} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },

    #[error("sample count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: parse error at offset {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl PcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(op: &'static str, left: Shape, right: Shape) -> Self {
        PcError::DimensionMismatch { op, left, right }
    }
}

pub type Result<T, E = PcError> = std::result::Result<T, E>;
