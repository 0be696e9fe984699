//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by any public operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor construction or layer application with inconsistent shapes.
    #[error("shape mismatch: {context}: got {got:?}, expected {expected}")]
    ShapeMismatch {
        context: &'static str,
        got: Vec<usize>,
        expected: String,
    },

    /// Tensor data containing NaN or infinity.
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    /// Class label outside `0..num_classes`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// A layer pipeline failed at a specific layer.
    #[error("layer {index} ({kind}): {source}")]
    Layer {
        index: usize,
        kind: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A change-spec field failed validation.
    #[error("invalid change spec: key `{key}`: {reason}")]
    InvalidSpec { key: &'static str, reason: String },

    /// Change-spec JSON that does not parse or has missing/unknown keys.
    #[error("change spec {path}: {message}")]
    SpecParse { path: PathBuf, message: String },

    /// A netpbm file whose magic bytes are not the expected `P5`/`P6`.
    #[error("{path}: bad magic: expected {expected}, found {found:?}")]
    PnmBadMagic {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    /// A netpbm file declaring a maxval above 255 (16-bit samples).
    #[error("{path}: unsupported maxval {maxval}: only 8-bit samples are supported")]
    PnmSixteenBit { path: PathBuf, maxval: u32 },

    /// A netpbm header that cannot be parsed.
    #[error("{path}: malformed header: {message}")]
    PnmMalformed { path: PathBuf, message: String },

    /// A file that ends before its declared payload.
    #[error("{path}: truncated: {message}")]
    Truncated { path: PathBuf, message: String },

    /// A weight file whose magic bytes are wrong.
    #[error("{path}: bad magic: not a WCGF weight file")]
    WeightBadMagic { path: PathBuf },

    /// A weight file with an unsupported format version.
    #[error("{path}: version mismatch: file version {found}, supported {supported}")]
    WeightVersion {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    /// A weight file whose tensors do not form a consistent pipeline.
    #[error("{path}: shape inconsistency: {message}")]
    WeightShape { path: PathBuf, message: String },

    /// Labels CSV that cannot be parsed.
    #[error("{path}: malformed labels csv: {message}")]
    LabelsCsv { path: PathBuf, message: String },

    /// An index outside a dataset or trace.
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
