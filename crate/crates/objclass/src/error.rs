//! Crate-wide error type.

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

    #[error("bad header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("empty raster: width, height and bands must all be positive")]
    EmptyRaster,

    #[error("payload size mismatch in {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("csv parse error at row {row}: {reason}")]
    Csv { row: u64, reason: String },

    #[error("label must be >= 1 (row {row} has label {label})")]
    ReservedLabel { row: u64, label: i64 },

    #[error("no palette entry for class {0}")]
    MissingPaletteEntry(u16),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectral-angle kernel undefined for a zero vector")]
    SamZeroVector,

    #[error("information-divergence kernel requires strictly positive components (component {index} is {value})")]
    SidNonPositive { index: usize, value: f64 },

    #[error("training set must contain at least two classes")]
    SingleClass,

    #[error("class {class} has {count} samples; at least {required} required")]
    TooFewSamples {
        class: u16,
        count: usize,
        required: usize,
    },

    #[error("scene generation failed: {0}")]
    SceneGeneration(String),

    #[error("degenerate confusion matrix: {0}")]
    DegenerateMatrix(String),

    #[error("model file {path}: {reason}")]
    ModelFormat { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code for the CLI: 2 for usage/config mistakes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
