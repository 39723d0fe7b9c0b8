use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training and adaptation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    /// The supervision cannot be realized in the available number of frames.
    #[error("infeasible supervision: {needed} frames needed, {frames} available")]
    InfeasibleSupervision { needed: usize, frames: usize },

    /// No complete path of the requested length exists in the graph.
    #[error("no complete path of {frames} frames through the graph")]
    Infeasible { frames: usize },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("zero-length input")]
    EmptyInput,

    #[error("non-finite gradient in {param} at index {index}: {value}")]
    NonFiniteGradient {
        param: String,
        index: usize,
        value: f64,
    },

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("missing record: {0}")]
    MissingRecord(String),

    #[error("id mismatch; missing hypotheses for [{}]; missing references for [{}]",
        .missing_hyp.join(", "), .missing_ref.join(", "))]
    IdMismatch {
        missing_hyp: Vec<String>,
        missing_ref: Vec<String>,
    },

    #[error("bad format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InfeasibleSupervision { .. } => "infeasible-supervision",
            Error::Infeasible { .. } => "infeasible",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EmptyInput => "empty-input",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::CorruptArchive(_) => "corrupt-archive",
            Error::MissingRecord(_) => "missing-record",
            Error::IdMismatch { .. } => "id-mismatch",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
