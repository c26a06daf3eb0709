use std::path::PathBuf;

use thiserror::Error;

use crate::signal::NmfState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("infeasible bandpass spec: {0}")]
    InfeasibleFilter(String),

    #[error("constant signal: {0} is undefined for zero-variance input")]
    ConstantSignal(&'static str),

    #[error("affine offset infeasible: lambda1 * min(y) + lambda2 = {lambda1} * {min} + {lambda2} < 0")]
    InfeasibleOffset { lambda1: f64, lambda2: f64, min: f64 },

    #[error("column {0} of the mixing factor is all zeros")]
    ZeroColumn(usize),

    #[error("non-finite divergence at layer {layer}, iteration {iteration}")]
    NonFiniteDivergence {
        layer: usize,
        iteration: usize,
        state: Box<NmfState>,
    },

    #[error("period search out of range: {0}")]
    PeriodRange(String),

    #[error("singular or ill-conditioned matrix (condition number {0:.3e})")]
    Singular(f64),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported wav format in {path}: {reason}")]
    WavFormat { path: PathBuf, reason: String },

    #[error("config parse error at line {line}: {reason}")]
    ConfigParse { line: usize, reason: String },

    #[error("json error: {0}")]
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
