use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: expected {expected} tab-separated fields, found {found}")]
    ColumnCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("text at index {index} has no tokens")]
    EmptyText { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("teacher/corpus misalignment: expected {expected} rows, found {found}")]
    Alignment { expected: usize, found: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("correlation undefined: input is constant")]
    ConstantInput,

    #[error("perplexity {perplexity} infeasible for {n} points: {reason}")]
    Perplexity { perplexity: f64, n: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
