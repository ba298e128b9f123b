use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid document {doc_id}: {message}")]
    InvalidDocument { doc_id: String, message: String },

    #[error("duplicate document id {0}")]
    DuplicateDocument(String),

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("candidate budget too small: k = {k} but {golds} distinct gold entities")]
    CandidateBudgetTooSmall { k: usize, golds: usize },

    #[error("candidate set size {k} exceeds entity vocabulary size {n_entities}")]
    CandidateSetTooLarge { k: usize, n_entities: usize },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("gold entity {entity} missing from candidate set")]
    GoldMissing { entity: usize },

    #[error("sequence length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("span ({start}, {end}) out of range for sequence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("overlapping mention spans ({0}, {1}) and ({2}, {3})")]
    OverlappingSpans(usize, usize, usize, usize),

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("non-finite gradient in parameter group {group}")]
    NonFiniteGradient { group: String },

    #[error("non-finite gradient norm")]
    NonFiniteNorm,

    #[error("non-finite update in parameter group {group}")]
    NonFiniteUpdate { group: String },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("redirect cycle: {}", .0.join(" -> "))]
    RedirectCycle(Vec<String>),

    #[error("prediction/gold count mismatch: {preds} predictions for {golds} gold mentions")]
    CountMismatch { preds: usize, golds: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

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

    /// True for the NaN/inf failures that abort training.
    pub fn is_non_finite(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NonFiniteNorm | Error::NonFiniteUpdate { .. } | Error::NonFiniteLoss { .. }
        )
    }
}
