//! Collisionless embedding storage with admission and expiry filters.
//!
//! Each sparse feature table is a [`CuckooTable`]: raw 64-bit ids map to
//! dedicated entries, never shared. New ids pass an occurrence-count
//! threshold (backed by a count-min sketch) and a Bernoulli filter before
//! an embedding is allocated; inactive ids expire after a per-table ttl.

mod cuckoo;
pub mod sketch;

pub use cuckoo::{CuckooTable, TableStats, DISPLACEMENT_LIMIT, MAX_LOAD_FACTOR};
pub use sketch::{CountMinSketch, OccurrenceCounter};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-table settings. `initial_capacity` counts slots across both bucket
/// arrays and must be a power of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub dim: usize,
    /// Occurrences required before an id may be admitted. Zero disables
    /// the threshold filter.
    pub admit_threshold: u32,
    /// Bernoulli admission probability in (0, 1]. One disables the filter.
    pub admit_probability: f64,
    /// Seconds of inactivity before expiry. Zero disables expiry.
    pub ttl: i64,
    pub initial_capacity: usize,
    pub hash_seeds: (u64, u64),
    /// Rows in the occurrence sketch.
    pub sketch_rows: usize,
    /// log2 of the sketch row width.
    pub sketch_width_log2: u32,
    /// Replace the sketch with an exact map (test mode).
    pub exact_counting: bool,
    /// Growth ceiling in slots; exceeding it is a storage-exhausted error.
    pub max_slots: usize,
}

impl TableConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            admit_threshold: 0,
            admit_probability: 1.0,
            ttl: 0,
            initial_capacity: 1024,
            hash_seeds: (0x243f_6a88_85a3_08d3, 0x1319_8a2e_0370_7344),
            sketch_rows: 4,
            sketch_width_log2: 18,
            exact_counting: false,
            max_slots: 1 << 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::config("table dim must be >= 1"));
        }
        if self.initial_capacity < 2 || !self.initial_capacity.is_power_of_two() {
            return Err(Error::config(format!(
                "initial_capacity must be a power of two >= 2, got {}",
                self.initial_capacity
            )));
        }
        if !(self.admit_probability > 0.0 && self.admit_probability <= 1.0) {
            return Err(Error::config(format!(
                "admit_probability must be in (0, 1], got {}",
                self.admit_probability
            )));
        }
        if self.ttl < 0 {
            return Err(Error::config("ttl must be >= 0 seconds"));
        }
        if self.sketch_rows < 1 || self.sketch_width_log2 < 1 {
            return Err(Error::config("sketch must have >= 1 row and width"));
        }
        Ok(())
    }

    /// Stable digest over the fields that define storage compatibility;
    /// recorded in snapshot headers.
    pub fn digest(&self) -> u64 {
        let mut bytes = Vec::with_capacity(64);
        bytes.extend_from_slice(&(self.dim as u64).to_le_bytes());
        bytes.extend_from_slice(&self.admit_threshold.to_le_bytes());
        bytes.extend_from_slice(&self.admit_probability.to_bits().to_le_bytes());
        bytes.extend_from_slice(&self.ttl.to_le_bytes());
        bytes.extend_from_slice(&(self.initial_capacity as u64).to_le_bytes());
        bytes.extend_from_slice(&self.hash_seeds.0.to_le_bytes());
        bytes.extend_from_slice(&self.hash_seeds.1.to_le_bytes());
        crate::hashing::fnv1a(&bytes)
    }
}

/// Stored state for one admitted id: the embedding, its Adagrad
/// accumulator, the last activity timestamp, and the occurrence estimate
/// observed at admission.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingEntry<S> {
    pub vector: Vec<S>,
    pub accumulator: Vec<S>,
    pub last_update: i64,
    pub occurrence_estimate: u32,
}

impl<S: Scalar> EmbeddingEntry<S> {
    /// Fresh entry with the standard uniform init in [-1/sqrt(dim), +1/sqrt(dim)].
    pub fn fresh<R: Rng>(dim: usize, now: i64, occurrence_estimate: u32, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let vector = (0..dim)
            .map(|_| S::from_f64_lossy(rng.random_range(-bound..=bound)))
            .collect();
        Self {
            vector,
            accumulator: vec![S::zero(); dim],
            last_update: now,
            occurrence_estimate,
        }
    }
}

/// Splits an id into (quotient, remainder) under a power-of-two modulus.
/// The hashed-table baseline represents an id's embedding as the sum of a
/// remainder-table entry and a quotient-table entry.
pub fn decompose_id(id: u64, modulus: u64) -> Result<(u64, u64)> {
    if modulus == 0 || !modulus.is_power_of_two() {
        return Err(Error::contract(format!(
            "modulus must be a power of two, got {modulus}"
        )));
    }
    Ok((id / modulus, id % modulus))
}
