use std::path::PathBuf;

use thiserror::Error;

/// A single problem found while validating a record-oriented input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {} invalid record(s): {}", .errors.len(), join_errors(.errors))]
    Records { path: PathBuf, errors: Vec<RecordError> },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("invalid language code `{0}`")]
    InvalidLanguage(String),

    #[error("invalid language pair: {0}")]
    InvalidPair(String),

    #[error("unknown language code `{0}` (no name in language table)")]
    UnknownLanguage(String),

    #[error("cannot sample {requested} items from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("vocabulary: {0}")]
    Vocab(String),

    #[error("cannot tokenize symbol {0:?}: not in vocabulary and no unknown token configured")]
    Untokenizable(String),

    #[error("token id {id} out of range for vocabulary size {vocab_size}")]
    IdOutOfRange { id: u64, vocab_size: u64 },

    #[error("activation rate: {0}")]
    Tar(String),

    #[error("model mismatch: `{0}` vs `{1}`")]
    ModelMismatch(String, String),

    #[error("duplicate entry: {0}")]
    Duplicate(String),

    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },

    #[error("distances: {0}")]
    Distance(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("undefined correlation: {0}")]
    Undefined(String),

    #[error("{0}")]
    Invalid(String),
}

fn join_errors(errors: &[RecordError]) -> String {
    errors
        .iter()
        .take(10)
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
