//! Shared domain types.

use serde::{Deserialize, Serialize};

/// A sparse feature: which table it belongs to and the raw 64-bit id.
///
/// The id is stored verbatim; it is never reduced modulo a table size on
/// the way into storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureKey {
    pub table_id: u16,
    pub id: u64,
}

impl FeatureKey {
    pub fn new(table_id: u16, id: u64) -> Self {
        Self { table_id, id }
    }
}

/// One labeled training/evaluation example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    /// Event timestamp, seconds. Streams are consumed in `ts` order.
    pub ts: i64,
    /// Binary label.
    pub label: u8,
    /// One key per feature slot.
    pub features: Vec<FeatureKey>,
    /// True when the example survived negative sampling at rate < 1.
    pub sampled: bool,
}

impl Example {
    pub fn new(ts: i64, label: u8, features: Vec<FeatureKey>) -> Self {
        Self {
            ts,
            label,
            features,
            sampled: false,
        }
    }
}
