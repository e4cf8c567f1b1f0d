use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // dataset
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("file is empty or has no data rows: {0}")]
    EmptyFile(PathBuf),
    #[error("target value at data row {row} is `{value}`, outside 1..={k}")]
    TargetOutOfRange { row: usize, value: String, k: usize },
    #[error("numeric column `{0}` has no observed values")]
    AllMissingColumn(String),
    #[error("invalid class proportions: {0}")]
    InvalidProportions(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    // shared shape/label errors
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}` has kind {found}, expected {expected}")]
    WrongColumnKind {
        column: String,
        found: &'static str,
        expected: &'static str,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid ratios: {0}")]
    InvalidRatios(String),

    // neural
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in layer {0}")]
    NonFiniteActivation(usize),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("label {label} outside 1..={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("forward cache does not match network: {0}")]
    CacheMismatch(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    // models
    #[error("feature width {found} does not match expected {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("class {0} has no training rows")]
    MissingClass(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // evaluation
    #[error("confusion matrix has no rows")]
    EmptyConfusion,
    #[error("class {class} has {count} rows, fewer than k = {k}")]
    ClassTooSmall { class: usize, count: usize, k: usize },

    // artifacts
    #[error("malformed artifact {path}: {reason}")]
    MalformedArtifact { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by the CLI to choose an exit status.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            NonFiniteActivation(_) | NonFiniteLoss(_) => ErrorCategory::Numeric,
            InvalidConfig(_) | InvalidRatios(_) | InvalidProportions(_) | InvalidSchema(_)
            | InvalidNetwork(_) => ErrorCategory::Config,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}
