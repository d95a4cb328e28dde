//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape mismatch, invalid
    /// argument range, inconsistent configuration).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Configuration file failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    /// A table refused to grow past its allocation limit.
    #[error("storage exhausted: table would exceed {max_slots} slots")]
    StorageExhausted { max_slots: usize },

    /// Metric is undefined for the given input (e.g. single-class AUC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Snapshot file content does not match its manifest checksum.
    #[error("snapshot corrupt: {file} (expected checksum {expected:#018x}, got {actual:#018x})")]
    SnapshotCorrupt {
        file: String,
        expected: u64,
        actual: u64,
    },

    /// Snapshot manifest references a file that is missing or truncated.
    #[error("snapshot file missing or unreadable: {file}")]
    SnapshotMissing { file: String },

    /// Sync packet rejected by the version guard.
    #[error(
        "stale packet from shard {source_shard}: version {version} <= last applied {last_applied}"
    )]
    StalePacket {
        source_shard: u32,
        version: u64,
        last_applied: u64,
    },

    /// A record in a data or stream file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data file absent.
    #[error("missing data file: {0}")]
    MissingData(PathBuf),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
