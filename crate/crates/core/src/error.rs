use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid parameter {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("row {row} has near-zero norm and cannot be normalized")]
    DegenerateRow { row: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("tape state error: {0}")]
    TapeState(String),

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    Vocabulary { token: usize, vocab_size: usize },

    #[error("unknown word {word:?} in prompt {prompt:?}")]
    UnknownWord { word: String, prompt: String },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("training diverged: non-finite gradient for parameter {param}")]
    Divergence { param: String },

    #[error("insufficient data: need at least {needed} studies, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("split oversubscribed: requested {requested} records, {available} available")]
    SplitSize { requested: usize, available: usize },

    #[error("AUC undefined with {positives} positives and {negatives} negatives")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("incompatible file version: found {found}, expected {expected}")]
    Version { found: String, expected: String },

    #[error("study {study_id} is missing its {modality}")]
    MissingModality { study_id: String, modality: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for I/O and file-format failures, as opposed to violated
    /// preconditions of an operation.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format { .. } | Error::Version { .. }
        )
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
