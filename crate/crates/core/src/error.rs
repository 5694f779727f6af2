//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A rollout record violates its invariants (e.g. zero token count).
    #[error("invalid rollout: {0}")]
    InvalidRollout(String),

    /// An operation that needs at least one sample received none.
    #[error("empty sample: {0}")]
    EmptySample(String),

    /// An empty dataset where records are required.
    #[error("empty dataset")]
    EmptyDataset,

    /// A configuration value violates a constraint. The offending key is named.
    #[error("invalid config `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    /// A problem definition violates its invariants.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// Cluster bookkeeping was asked to do something inconsistent,
    /// e.g. register the same rollout index twice.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Model/feature dimension mismatch.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// Remote generation failed after the configured retries.
    #[error("transport error: {0}")]
    Transport(String),

    /// Selection was attempted before the node state allows it.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A node has no children yet; the caller must expand it first.
    #[error("node must be expanded before selection")]
    MustExpand,

    /// A line of an input file failed to parse.
    #[error("parse error at line {line} (byte {offset}): {message}")]
    Parse {
        line: usize,
        offset: u64,
        message: String,
    },

    /// A record failed validation on import.
    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
