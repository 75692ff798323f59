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

    #[error("bad magic at byte 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {version} at byte 4")]
    UnsupportedVersion { version: u32 },

    #[error("truncated file: expected {expected} bytes, found {found} (first missing byte at offset {found})")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("file has {extra} trailing bytes after payload ending at offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },

    #[error("dimension is zero (n={n}, d={d})")]
    DimensionZero { n: u64, d: u64 },

    #[error("non-finite value in row {row}, column {col} (byte offset {offset})")]
    NonFiniteValue { row: usize, col: usize, offset: u64 },

    #[error("reserved header bytes 21..25 must be zero")]
    ReservedNonZero,

    #[error("invalid modality tag {0} at byte 20")]
    BadModality(u8),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {row} of the {side} set is not unit-norm (norm {norm})")]
    NotNormalized { side: &'static str, row: usize, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("index {index} out of range for pool of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate index {0} in batch")]
    DuplicateIndex(usize),

    #[error("batch plan is for n={plan_n}, pool has n={pool_n}")]
    PlanMismatch { plan_n: usize, pool_n: usize },

    #[error("target set is empty")]
    EmptyTarget,

    #[error("norm order must be >= 1, got {0}")]
    InvalidNormOrder(f64),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("invalid target size {target} for pool of size {pool_n}")]
    InvalidTarget { target: usize, pool_n: usize },

    #[error("selection would be empty: {0}")]
    EmptySelection(String),

    #[error("selections refer to different pools ({left} vs {right})")]
    PoolMismatch { left: usize, right: usize },

    #[error("subset has {0} samples, at least 2 are required")]
    SubsetTooSmall(usize),

    #[error("{0} samples given, at least {1} are required")]
    TooFewSamples(usize, usize),

    #[error("{0} classes given, at least 2 are required")]
    TooFewClasses(usize),

    #[error("SVD did not converge after {0} sweeps")]
    ConvergenceFailure(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
