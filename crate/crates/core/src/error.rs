use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Failure reported by an embedding, chat, judge or generator backend.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    /// Transport failed; `attempts` is the number of tries made before giving up.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    /// The provider answered, but the payload did not have the expected shape.
    #[error("malformed provider response: {0}")]
    Malformed(String),
    /// The provider violated its declared contract (dimension, count, id).
    #[error("provider contract violated: {0}")]
    Contract(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. })
    }
}

/// Coarse error classes, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("empty corpus")]
    EmptyCorpus,
    #[error("document `{0}` is empty after trimming whitespace")]
    EmptyDocument(String),
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("empty store")]
    EmptyStore,
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunk(String),
    #[error("unknown chunk id `{0}`")]
    UnknownChunk(String),

    #[error("embedder mismatch: expected `{expected}`, found `{found}`")]
    EmbedderMismatch { expected: String, found: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("metric mismatch: expected `{expected}`, found `{found}`")]
    MetricMismatch { expected: String, found: String },
    #[error("vector contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("empty calibration set")]
    EmptyCalibrationSet,
    #[error("no labeled calibration records")]
    NoLabeledRecords,
    #[error("all {0} calibration questions were dropped (no answer-bearing chunk found)")]
    AllDropped(usize),
    #[error("strict mode: {} question(s) had no answer-bearing chunk: {}", .0.len(), .0.join(", "))]
    StrictDrop(Vec<String>),
    #[error("corrupt calibration report: {0}")]
    CorruptReport(String),
    #[error("question id `{0}` appears in both calibration and test splits")]
    OverlappingSplits(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("{stage} failed: {source}")]
    Provider {
        stage: &'static str,
        #[source]
        source: ProviderError,
    },
    #[error("{failed} chunk(s) failed to embed: {source}")]
    EmbeddingFailed {
        failed: usize,
        #[source]
        source: ProviderError,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::OverlappingSplits(_) | Error::EmptySplit(_) => {
                ErrorKind::Config
            }
            Error::Provider { source, .. } | Error::EmbeddingFailed { source, .. } => {
                match source {
                    ProviderError::Transport { .. } => ErrorKind::Provider,
                    _ => ErrorKind::Data,
                }
            }
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
