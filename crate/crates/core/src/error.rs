use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the zero-norm threshold")]
    ZeroNorm { norm: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("beta concentration must be positive, got {0}")]
    NonPositiveAlpha(f64),

    #[error("empty batch")]
    EmptyBatch,

    #[error("pseudo-OOD generation needs at least 2 features, got {0}")]
    BatchTooSmall(usize),

    #[error("invalid shell count K = {0} (must be >= 1)")]
    InvalidK(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("shell index {index} out of range for K = {k}")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("ReAct clip must be positive, got {0}")]
    NonPositiveClip(f64),

    #[error("score set is empty")]
    EmptyScoreSet,

    #[error("class {class} has {count} samples, need at least 2")]
    ClassTooSmall { class: usize, count: usize },

    #[error("between-class scatter is zero; NC1 undefined")]
    DegenerateScatter,

    #[error("validation split is empty")]
    EmptyValidation,

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("payload size mismatch: header declares {declared} bytes, found {found}")]
    DimMismatch { declared: usize, found: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit status: 1 for configuration errors, 3 for I/O and file
    /// format errors, 2 for everything raised while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidK(_)
            | Error::NonPositiveAlpha(_)
            | Error::NonPositiveTemperature(_)
            | Error::NonPositiveClip(_) => 1,
            Error::Io(_) | Error::Csv(_) | Error::CorruptHeader(_) | Error::DimMismatch { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}
