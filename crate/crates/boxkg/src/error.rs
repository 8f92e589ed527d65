//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoxKgError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{file}:{line}: malformed line: {msg}")]
    MalformedLine {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("name `{0}` appears in both the entity and concept vocabularies")]
    NameCollision(String),

    #[error("empty input file: {0}")]
    EmptyFile(String),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("{kind} id {id} out of range (vocabulary size {len})")]
    IdOutOfRange { kind: &'static str, id: u32, len: usize },

    #[error("unknown {kind} name `{name}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownName {
        kind: &'static str,
        name: String,
        suggestion: Option<String>,
    },

    #[error("missing text feature for concept {concept}, relation {relation}")]
    MissingTextFeature { concept: u32, relation: u32 },

    #[error("degenerate box: expected volume {0} below clamp")]
    DegenerateVolume(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("negative sampling exhausted: produced {got} of {needed} after retry budget")]
    SamplingExhausted { needed: usize, got: usize },

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("missing parameter table `{0}`")]
    MissingTable(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch (truncated or corrupt file)")]
    ChecksumMismatch,
}

impl BoxKgError {
    /// Process exit code class: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        use BoxKgError::*;
        match self {
            BadConfig(_) => 1,
            Io(_) | MalformedLine { .. } | NameCollision(_) | EmptyFile(_)
            | IdOutOfRange { .. } | UnknownName { .. } | MissingTextFeature { .. }
            | SamplingExhausted { .. } | EmptyPartition(_) | MissingTable(_)
            | CheckpointFormat(_) | VersionMismatch { .. } | ChecksumMismatch
            | DimMismatch { .. } => 2,
            DegenerateVolume(_) | NonFinite(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, BoxKgError>;
