//! Real-time recommendation training core: collisionless embedding tables
//! with admission/expiry filters, a DeepFM model, sharded parameter
//! storage with snapshot recovery, incremental training-to-serving
//! parameter synchronization, an out-of-order feature/action joiner, and
//! the experiment drivers that exercise them end to end.
//!
//! Parameter math is generic over [`scalar::Scalar`]; the aliases below
//! fix the concrete `f32` instantiation used by the binary formats, the
//! CLI, and the experiments.

pub mod config;
pub mod datasets;
pub mod embedding;
pub mod error;
pub mod hashing;
pub mod model;
pub mod optim;
pub mod joiner;
pub mod ps;
pub mod scalar;
pub mod sync;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use types::{Example, FeatureKey};

/// Scalar type of every shipped table, snapshot, and wire format.
pub type Real = f32;

pub type EmbeddingTable = embedding::CuckooTable<Real>;
pub type EmbeddingEntry = embedding::EmbeddingEntry<Real>;
pub type DenseParams = model::DenseParams<Real>;
pub type Shard = ps::PsShard<Real>;
pub type Cluster = ps::Cluster<Real>;
pub type SyncPacket = sync::SyncPacket<Real>;
