use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("dialog {dialog_id}: {message}")]
    Schema { dialog_id: String, message: String },

    #[error("text has no tokens: {text:?}")]
    EmptyText { text: String },

    #[error("no imported embedding for text hash {hash:016x}")]
    CacheMiss { hash: u64 },

    #[error("corrupt embedding file {path}: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite loss at dialog {dialog_id} turn {turn_index}")]
    NonFiniteLoss {
        dialog_id: String,
        turn_index: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grounding outputs differ between {left} and {right} at turn {turn}")]
    OutputMismatch {
        left: &'static str,
        right: &'static str,
        turn: usize,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input rather than by the engine itself.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::EmptyText { .. }
            | Error::CacheMiss { .. }
            | Error::Shape(_)
            | Error::Index { .. }
            | Error::EmptyInput(_)
            | Error::InvalidConfig(_) => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
