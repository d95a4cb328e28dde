//! Incremental training-to-serving parameter synchronization.
//!
//! Training shards record the keys whose embeddings received gradients
//! since the last drain. A sync drains that set, snapshots the current
//! vectors into a [`SyncPacket`], and applies the packet to the serving
//! shard with per-key atomicity while reads continue. Dense parameters
//! ride along on a slower schedule as one atomically swapped block.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ps::PsShard;
use crate::scalar::Scalar;

/// Keys trained since the last drain, per table.
#[derive(Debug, Default)]
pub struct TouchedKeys {
    per_table: HashMap<u16, BTreeSet<u64>>,
}

impl TouchedKeys {
    pub fn mark(&mut self, table_id: u16, id: u64) {
        self.per_table.entry(table_id).or_default().insert(id);
    }

    pub fn len(&self) -> usize {
        self.per_table.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Empties the set, returning its content sorted by table then key.
    pub fn drain(&mut self) -> Vec<(u16, Vec<u64>)> {
        let taken = std::mem::take(&mut self.per_table);
        let sorted: BTreeMap<u16, BTreeSet<u64>> = taken.into_iter().collect();
        sorted
            .into_iter()
            .map(|(t, keys)| (t, keys.into_iter().collect()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSection<S> {
    pub table_id: u16,
    /// (key, vector) value snapshots; no optimizer state crosses the wire.
    pub entries: Vec<(u64, Vec<S>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSection<S> {
    /// Offset of this shard's slice in the flat dense layout.
    pub offset: u64,
    pub values: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncPacket<S> {
    pub source_shard: u32,
    pub version: u64,
    pub sections: Vec<SparseSection<S>>,
    pub dense: Option<DenseSection<S>>,
    /// In-process metadata; the wire format does not carry it and decoded
    /// packets report zero.
    pub created_at: i64,
}

impl<S: Scalar> SyncPacket<S> {
    /// Wire encoding: header (source shard u32, version u64, section
    /// count u32), per section (table_id u32, entry count u32, entries of
    /// key u64 + dim scalars), then a length-prefixed dense block (length
    /// zero when absent). All little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.source_shard.to_le_bytes());
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for section in &self.sections {
            out.extend_from_slice(&u32::from(section.table_id).to_le_bytes());
            out.extend_from_slice(&(section.entries.len() as u32).to_le_bytes());
            for (key, vector) in &section.entries {
                out.extend_from_slice(&key.to_le_bytes());
                for &v in vector {
                    v.write_le(&mut out);
                }
            }
        }
        match &self.dense {
            None => out.extend_from_slice(&0u32.to_le_bytes()),
            Some(block) => {
                let payload_len = 8 + block.values.len() * S::WIRE_SIZE;
                out.extend_from_slice(&(payload_len as u32).to_le_bytes());
                out.extend_from_slice(&block.offset.to_le_bytes());
                for &v in &block.values {
                    v.write_le(&mut out);
                }
            }
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        let mut len = 4 + 8 + 4;
        for section in &self.sections {
            len += 4 + 4;
            for (_, vector) in &section.entries {
                len += 8 + vector.len() * S::WIRE_SIZE;
            }
        }
        len += 4;
        if let Some(block) = &self.dense {
            len += 8 + block.values.len() * S::WIRE_SIZE;
        }
        len
    }

    /// Decodes a packet. Section payloads carry no width of their own, so
    /// the caller supplies the per-table embedding dim (serving shards
    /// know their table configs).
    pub fn decode(bytes: &[u8], dim_of: impl Fn(u16) -> Option<usize>) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let source_shard = r.u32()?;
        let version = r.u64()?;
        let section_count = r.u32()?;
        let mut sections = Vec::with_capacity(section_count as usize);
        for _ in 0..section_count {
            let raw_table = r.u32()?;
            let table_id = u16::try_from(raw_table)
                .map_err(|_| Error::Decode(format!("table id {raw_table} out of range")))?;
            let dim = dim_of(table_id)
                .ok_or_else(|| Error::Decode(format!("unknown table {table_id}")))?;
            let entry_count = r.u32()?;
            let mut entries = Vec::with_capacity(entry_count as usize);
            for _ in 0..entry_count {
                let key = r.u64()?;
                let mut vector = Vec::with_capacity(dim);
                for _ in 0..dim {
                    vector.push(r.scalar::<S>()?);
                }
                entries.push((key, vector));
            }
            sections.push(SparseSection { table_id, entries });
        }
        let dense_len = r.u32()? as usize;
        let dense = if dense_len == 0 {
            None
        } else {
            if dense_len < 8 || (dense_len - 8) % S::WIRE_SIZE != 0 {
                return Err(Error::Decode(format!("bad dense block length {dense_len}")));
            }
            let offset = r.u64()?;
            let count = (dense_len - 8) / S::WIRE_SIZE;
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(r.scalar::<S>()?);
            }
            Some(DenseSection { offset, values })
        };
        r.finish()?;
        Ok(Self {
            source_shard,
            version,
            sections,
            dense,
            created_at: 0,
        })
    }

    pub fn sparse_key_count(&self) -> usize {
        self.sections.iter().map(|s| s.entries.len()).sum()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Decode("truncated packet".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn scalar<S: Scalar>(&mut self) -> Result<S> {
        Ok(S::read_le(self.take(S::WIRE_SIZE)?))
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes",
                self.bytes.len() - self.at
            )));
        }
        Ok(())
    }
}

/// Outcome counters for one packet build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub keys: u64,
    /// Touched keys that were evicted between touch and drain.
    pub skipped_evicted: u64,
}

/// Snapshots current vectors for the drained keys. Keys that disappeared
/// between touch and drain are skipped and counted.
pub fn build_sparse_packet<S: Scalar>(
    shard: &PsShard<S>,
    drained: Vec<(u16, Vec<u64>)>,
    dense: Option<DenseSection<S>>,
    created_at: i64,
) -> (SyncPacket<S>, BuildStats) {
    let mut stats = BuildStats::default();
    let mut sections = Vec::new();
    for (table_id, keys) in drained {
        let mut entries = Vec::with_capacity(keys.len());
        shard.with_table(table_id, |table| {
            for key in keys {
                match table.lookup(key) {
                    Some(entry) => {
                        entries.push((key, entry.vector.clone()));
                        stats.keys += 1;
                    }
                    None => stats.skipped_evicted += 1,
                }
            }
        });
        if !entries.is_empty() {
            sections.push(SparseSection { table_id, entries });
        }
    }
    (
        SyncPacket {
            source_shard: shard.id(),
            version: shard.version(),
            sections,
            dense,
            created_at,
        },
        stats,
    )
}

/// Applies a packet to a serving shard. Rejected (with state untouched)
/// when the version does not advance past the last applied packet from
/// the same source. Each key is upserted under a brief per-table write
/// lock so concurrent reads see the old or new vector, never a blend; the
/// dense slice is swapped as one block.
pub fn apply_packet<S: Scalar>(shard: &PsShard<S>, packet: &SyncPacket<S>, now: i64) -> Result<()> {
    shard.guard_version(packet.source_shard, packet.version)?;
    for section in &packet.sections {
        for (key, vector) in &section.entries {
            shard.upsert_vector(section.table_id, *key, vector, now)?;
        }
    }
    if let Some(block) = &packet.dense {
        shard.swap_dense_slice(block.offset as usize, &block.values)?;
    }
    shard.commit_version(packet.source_shard, packet.version);
    Ok(())
}

/// Paper-style transfer estimate: payload values only, no key overhead.
pub fn estimate_packet_bytes(num_keys: u64, dim: u64, bytes_per_element: u64) -> u64 {
    num_keys * dim * bytes_per_element
}

/// Exact per-key cost including the 8-byte key.
pub fn estimate_packet_bytes_exact(num_keys: u64, dim: u64, bytes_per_element: u64) -> u64 {
    num_keys * (8 + dim * bytes_per_element)
}

/// Which parameter groups a step should push.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncAction {
    None,
    SparseOnly,
    SparseAndDense,
}

/// Step intervals for sparse and dense pushes; dense must be a multiple
/// of sparse (dense always rides with a sparse push).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSchedule {
    pub sparse_interval: u64,
    pub dense_interval: u64,
}

impl SyncSchedule {
    pub fn new(sparse_interval: u64, dense_interval: u64) -> Result<Self> {
        if sparse_interval == 0 || dense_interval == 0 {
            return Err(Error::config("sync intervals must be >= 1 step"));
        }
        if dense_interval % sparse_interval != 0 || dense_interval < sparse_interval {
            return Err(Error::config(format!(
                "dense interval {dense_interval} must be a multiple of sparse interval {sparse_interval}"
            )));
        }
        Ok(Self {
            sparse_interval,
            dense_interval,
        })
    }

    pub fn should_sync(&self, step: u64) -> SyncAction {
        if step % self.dense_interval == 0 {
            SyncAction::SparseAndDense
        } else if step % self.sparse_interval == 0 {
            SyncAction::SparseOnly
        } else {
            SyncAction::None
        }
    }
}
