//! Sharded parameter storage with training and serving roles.
//!
//! Keys are assigned to shards by a pure hash of the id. Each shard holds
//! a slice of every sparse table plus a contiguous slice of the flat
//! dense parameter vector. Shards take many concurrent readers and one
//! writer; entries change with per-key atomicity. Training shards apply
//! gradients and record touched keys; serving shards change only through
//! sync packets.

pub mod reliability;
pub mod snapshot;

pub use reliability::{expected_feedback_loss, FeedbackLoss};
pub use snapshot::{find_latest_manifest, read_manifest, restore_shard, snapshot_shard, FileEntry, SnapshotManifest};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{CuckooTable, EmbeddingEntry, TableConfig, TableStats};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, mix64};
use crate::model::{DeepFmConfig, DenseParams};
use crate::optim::AdamState;
use crate::scalar::Scalar;
use crate::sync::{apply_packet, build_sparse_packet, DenseSection, SyncPacket, TouchedKeys};
use crate::types::FeatureKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShardId(pub u32);

/// Stable shard assignment: `mix64(id) mod num_shards`.
pub fn partition(key: FeatureKey, num_shards: u32) -> Result<ShardId> {
    if num_shards == 0 {
        return Err(Error::contract("num_shards must be >= 1"));
    }
    Ok(ShardId((mix64(key.id) % u64::from(num_shards)) as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Training,
    Serving,
}

/// This shard's contiguous slice of the flat dense parameter vector,
/// with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock<S> {
    pub offset: usize,
    pub values: Vec<S>,
    pub adam: AdamState<S>,
}

impl<S: Scalar> DenseBlock<S> {
    pub fn new(offset: usize, values: Vec<S>) -> Self {
        let len = values.len();
        Self {
            offset,
            values,
            adam: AdamState::new(len),
        }
    }
}

/// One sparse gradient within an update batch.
#[derive(Debug, Clone)]
pub struct SparseUpdate<S> {
    pub table_id: u16,
    pub id: u64,
    pub grad: Vec<S>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOutcome {
    pub applied: u64,
    /// Gradients for keys that were filtered or evicted; dropped and counted.
    pub missing: u64,
}

#[derive(Debug)]
pub struct PsShard<S> {
    id: u32,
    role: Role,
    tables: BTreeMap<u16, RwLock<CuckooTable<S>>>,
    dense: RwLock<DenseBlock<S>>,
    version: AtomicU64,
    touched: Mutex<TouchedKeys>,
    /// Last applied packet version per source shard (serving role).
    last_applied: Mutex<BTreeMap<u32, u64>>,
    admit_rng: Mutex<ChaCha8Rng>,
}

impl<S: Scalar> PsShard<S> {
    pub fn new(
        id: u32,
        role: Role,
        table_cfgs: &BTreeMap<u16, TableConfig>,
        dense: DenseBlock<S>,
        seed: u64,
    ) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for (&table_id, cfg) in table_cfgs {
            tables.insert(table_id, RwLock::new(CuckooTable::new(cfg.clone())?));
        }
        // A fresh training shard's initialized parameters are its first
        // state (version 1), so they pass the serving version guard on the
        // first sync. Serving starts behind at 0.
        let version = match role {
            Role::Training => 1,
            Role::Serving => 0,
        };
        Ok(Self {
            id,
            role,
            tables,
            dense: RwLock::new(dense),
            version: AtomicU64::new(version),
            touched: Mutex::new(TouchedKeys::default()),
            last_applied: Mutex::new(BTreeMap::new()),
            admit_rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    pub fn from_parts(
        id: u32,
        role: Role,
        tables: BTreeMap<u16, CuckooTable<S>>,
        dense: DenseBlock<S>,
        version: u64,
        seed: u64,
    ) -> Self {
        Self {
            id,
            role,
            tables: tables
                .into_iter()
                .map(|(t, table)| (t, RwLock::new(table)))
                .collect(),
            dense: RwLock::new(dense),
            version: AtomicU64::new(version),
            touched: Mutex::new(TouchedKeys::default()),
            last_applied: Mutex::new(BTreeMap::new()),
            admit_rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }

    pub fn table_ids(&self) -> Vec<u16> {
        self.tables.keys().copied().collect()
    }

    pub fn table_dim(&self, table_id: u16) -> Option<usize> {
        self.tables.get(&table_id).map(|t| t.read().config().dim)
    }

    /// Runs `f` under the table's read lock.
    ///
    /// Panics on an unknown table id; the table set is fixed at
    /// construction and ids come from routed keys.
    pub fn with_table<R>(&self, table_id: u16, f: impl FnOnce(&CuckooTable<S>) -> R) -> R {
        let table = self
            .tables
            .get(&table_id)
            .unwrap_or_else(|| panic!("unknown table {table_id} on shard {}", self.id));
        f(&table.read())
    }

    fn table(&self, table_id: u16) -> Result<&RwLock<CuckooTable<S>>> {
        self.tables.get(&table_id).ok_or_else(|| {
            Error::contract(format!("unknown table {table_id} on shard {}", self.id))
        })
    }

    /// Training-path lookup with admission filtering.
    pub fn lookup_or_admit(&self, table_id: u16, id: u64, now: i64) -> Result<Option<Vec<S>>> {
        let mut rng = self.admit_rng.lock();
        self.table(table_id)?
            .write()
            .lookup_or_admit(id, now, &mut rng)
    }

    /// Width-`dim` zero-initialized get-or-create; linear terms bypass the
    /// admission filters once their embedding slot was admitted.
    pub fn lookup_or_insert_zero(&self, table_id: u16, id: u64, now: i64) -> Result<Vec<S>> {
        let table = self.table(table_id)?;
        let mut guard = table.write();
        if let Some(entry) = guard.lookup(id) {
            return Ok(entry.vector.clone());
        }
        let dim = guard.config().dim;
        let zero = vec![S::zero(); dim];
        let entry = EmbeddingEntry {
            vector: zero.clone(),
            accumulator: vec![S::zero(); dim],
            last_update: now,
            occurrence_estimate: 0,
        };
        guard.insert(id, entry)?;
        Ok(zero)
    }

    /// Read-only lookup (serving evaluation); absent keys yield `None`.
    pub fn lookup_vector(&self, table_id: u16, id: u64) -> Option<Vec<S>> {
        self.tables
            .get(&table_id)
            .and_then(|t| t.read().lookup(id).map(|e| e.vector.clone()))
    }

    /// Applies one update batch: Adagrad on each sparse gradient (marking
    /// the touched set), Adam on the dense slice, then one version bump.
    pub fn apply_update_batch(
        &self,
        sparse: &[SparseUpdate<S>],
        dense_grad: Option<&[S]>,
        sparse_lr: S,
        dense_lr: S,
        now: i64,
    ) -> Result<BatchOutcome> {
        if self.role != Role::Training {
            return Err(Error::contract("serving shards never originate gradients"));
        }
        let mut outcome = BatchOutcome::default();
        for update in sparse {
            let applied =
                self.table(update.table_id)?
                    .write()
                    .apply_gradient(update.id, &update.grad, sparse_lr, now)?;
            if applied {
                self.touched.lock().mark(update.table_id, update.id);
                outcome.applied += 1;
            } else {
                outcome.missing += 1;
            }
        }
        if let Some(grad) = dense_grad {
            let mut dense = self.dense.write();
            if grad.len() != dense.values.len() {
                return Err(Error::contract(format!(
                    "dense grad width {} does not match shard slice {}",
                    grad.len(),
                    dense.values.len()
                )));
            }
            let DenseBlock { values, adam, .. } = &mut *dense;
            adam.step(values, grad, dense_lr);
        }
        self.version.fetch_add(1, Ordering::AcqRel);
        Ok(outcome)
    }

    /// Atomically empties and returns the touched-key set.
    pub fn drain_touched(&self) -> Vec<(u16, Vec<u64>)> {
        self.touched.lock().drain()
    }

    pub fn touched_len(&self) -> usize {
        self.touched.lock().len()
    }

    pub fn evict_expired(&self, now: i64) -> usize {
        self.tables
            .values()
            .map(|t| t.write().evict_expired(now))
            .sum()
    }

    /// Upserts one synced vector under a brief write lock.
    pub fn upsert_vector(&self, table_id: u16, id: u64, vector: &[S], now: i64) -> Result<()> {
        self.table(table_id)?.write().upsert_vector(id, vector, now)
    }

    /// Replaces the dense slice as one block (sync application).
    pub fn swap_dense_slice(&self, offset: usize, values: &[S]) -> Result<()> {
        let mut dense = self.dense.write();
        if offset != dense.offset || values.len() != dense.values.len() {
            return Err(Error::contract(format!(
                "dense slice ({offset}, {}) does not match shard block ({}, {})",
                values.len(),
                dense.offset,
                dense.values.len()
            )));
        }
        dense.values.copy_from_slice(values);
        Ok(())
    }

    /// Version guard: a packet must advance past the last applied version
    /// from its source.
    pub fn guard_version(&self, source_shard: u32, version: u64) -> Result<()> {
        let last = self.last_applied.lock();
        let applied = last.get(&source_shard).copied().unwrap_or(0);
        if version <= applied {
            return Err(Error::StalePacket {
                source_shard,
                version,
                last_applied: applied,
            });
        }
        Ok(())
    }

    pub fn commit_version(&self, source_shard: u32, version: u64) {
        self.last_applied.lock().insert(source_shard, version);
        self.version.fetch_add(1, Ordering::AcqRel);
    }

    pub fn last_applied_from(&self, source_shard: u32) -> u64 {
        self.last_applied
            .lock()
            .get(&source_shard)
            .copied()
            .unwrap_or(0)
    }

    /// Clears the guard for a source that recovered from snapshot (its
    /// version counter may have moved backwards).
    pub fn rearm_guard(&self, source_shard: u32) {
        self.last_applied.lock().remove(&source_shard);
    }

    pub fn dense_block(&self) -> DenseBlock<S> {
        self.dense.read().clone()
    }

    /// (offset, length) of this shard's dense slice.
    pub fn dense_range(&self) -> (usize, usize) {
        let dense = self.dense.read();
        (dense.offset, dense.values.len())
    }

    pub fn dense_section(&self) -> DenseSection<S> {
        let dense = self.dense.read();
        DenseSection {
            offset: dense.offset as u64,
            values: dense.values.clone(),
        }
    }

    /// Summed filter/update counters across this shard's tables.
    pub fn stats(&self) -> TableStats {
        let mut total = TableStats::default();
        for table in self.tables.values() {
            let s = table.read().stats();
            total.admitted += s.admitted;
            total.filtered_by_threshold += s.filtered_by_threshold;
            total.filtered_by_probability += s.filtered_by_probability;
            total.evicted += s.evicted;
            total.missing_gradient_keys += s.missing_gradient_keys;
            total.grows += s.grows;
        }
        total
    }

    pub fn entry_count(&self) -> usize {
        self.tables.values().map(|t| t.read().len()).sum()
    }

    /// Adopts another shard's learned state (failure recovery). Updates
    /// marked since the last drain are gone with the old state, so the
    /// touched set resets.
    pub fn replace_state_from(&self, other: PsShard<S>) {
        for (table_id, table) in other.tables {
            if let Some(own) = self.tables.get(&table_id) {
                *own.write() = table.into_inner();
            }
        }
        *self.dense.write() = other.dense.into_inner();
        self.version
            .store(other.version.load(Ordering::Acquire), Ordering::Release);
        *self.touched.lock() = TouchedKeys::default();
    }

    /// Marks every stored key as touched: a recovered shard re-pushes all
    /// of its state on the next sync, healing any serving-side divergence.
    pub fn mark_all_touched(&self) {
        let mut touched = self.touched.lock();
        for (&table_id, table) in &self.tables {
            for (id, _) in table.read().iter() {
                touched.mark(table_id, id);
            }
        }
    }

    /// Learned-state comparison: same table entries (vector, accumulator,
    /// last_update), same dense slice and optimizer state, same version.
    pub fn state_eq(&self, other: &Self) -> bool {
        if self.version() != other.version() {
            return false;
        }
        if self.table_ids() != other.table_ids() {
            return false;
        }
        for (table_id, table) in &self.tables {
            let ours = table.read();
            let eq = other.with_table(*table_id, |theirs| ours.state_eq(theirs));
            if !eq {
                return false;
            }
        }
        *self.dense.read() == *other.dense.read()
    }
}

/// Per-round synchronization counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SyncRoundStats {
    pub packets: u64,
    pub rejected_stale: u64,
    pub keys: u64,
    pub skipped_evicted: u64,
    pub bytes: u64,
    pub dense_blocks: u64,
}

/// In-process cluster: one training and one serving shard per index. The
/// wire between them is the packet byte encoding.
pub struct Cluster<S> {
    num_shards: u32,
    seed: u64,
    table_cfgs: BTreeMap<u16, TableConfig>,
    model_cfg: DeepFmConfig,
    training: Vec<Arc<PsShard<S>>>,
    serving: Vec<Arc<PsShard<S>>>,
}

impl<S: Scalar> Cluster<S> {
    pub fn new(
        num_shards: u32,
        table_cfgs: BTreeMap<u16, TableConfig>,
        model_cfg: DeepFmConfig,
        seed: u64,
    ) -> Result<Self> {
        if num_shards == 0 {
            return Err(Error::contract("cluster needs at least one shard"));
        }
        model_cfg.validate()?;
        for cfg in table_cfgs.values() {
            cfg.validate()?;
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "dense-init"));
        let flat = DenseParams::<S>::init(&model_cfg, &mut init_rng).flatten();
        let ranges = split_ranges(flat.len(), num_shards as usize);

        let mut training = Vec::with_capacity(num_shards as usize);
        let mut serving = Vec::with_capacity(num_shards as usize);
        for i in 0..num_shards {
            let (offset, len) = ranges[i as usize];
            let train_block = DenseBlock::new(offset, flat[offset..offset + len].to_vec());
            let serve_block = DenseBlock::new(offset, vec![S::zero(); len]);
            training.push(Arc::new(PsShard::new(
                i,
                Role::Training,
                &table_cfgs,
                train_block,
                derive_seed(seed, &format!("train-shard-{i}")),
            )?));
            serving.push(Arc::new(PsShard::new(
                i,
                Role::Serving,
                &table_cfgs,
                serve_block,
                derive_seed(seed, &format!("serve-shard-{i}")),
            )?));
        }
        Ok(Self {
            num_shards,
            seed,
            table_cfgs,
            model_cfg,
            training,
            serving,
        })
    }

    pub fn num_shards(&self) -> u32 {
        self.num_shards
    }

    pub fn model_cfg(&self) -> &DeepFmConfig {
        &self.model_cfg
    }

    pub fn table_cfgs(&self) -> &BTreeMap<u16, TableConfig> {
        &self.table_cfgs
    }

    pub fn route(&self, key: FeatureKey) -> ShardId {
        partition(key, self.num_shards).expect("non-empty cluster")
    }

    pub fn training(&self, shard: ShardId) -> &Arc<PsShard<S>> {
        &self.training[shard.0 as usize]
    }

    pub fn serving(&self, shard: ShardId) -> &Arc<PsShard<S>> {
        &self.serving[shard.0 as usize]
    }

    pub fn training_shards(&self) -> &[Arc<PsShard<S>>] {
        &self.training
    }

    pub fn serving_shards(&self) -> &[Arc<PsShard<S>>] {
        &self.serving
    }

    /// Routed training-path lookup.
    pub fn lookup_or_admit(&self, key: FeatureKey, now: i64) -> Result<Option<Vec<S>>> {
        self.training(self.route(key))
            .lookup_or_admit(key.table_id, key.id, now)
    }

    pub fn lookup_or_insert_zero(&self, key: FeatureKey, now: i64) -> Result<Vec<S>> {
        self.training(self.route(key))
            .lookup_or_insert_zero(key.table_id, key.id, now)
    }

    /// Serving-side read; absent keys read as `None` (zero vector upstream).
    pub fn lookup_serving(&self, key: FeatureKey) -> Option<Vec<S>> {
        self.serving(self.route(key)).lookup_vector(key.table_id, key.id)
    }

    /// Full dense parameters of one role, gathered across shard slices.
    pub fn gather_dense(&self, role: Role) -> Result<DenseParams<S>> {
        let shards = match role {
            Role::Training => &self.training,
            Role::Serving => &self.serving,
        };
        let mut flat = vec![S::zero(); DenseParams::<S>::flat_len(&self.model_cfg)];
        for shard in shards {
            let block = shard.dense_block();
            flat[block.offset..block.offset + block.values.len()].copy_from_slice(&block.values);
        }
        DenseParams::from_flat(&self.model_cfg, &flat)
    }

    /// Drains every training shard and pushes packets over the simulated
    /// wire (encode, decode, apply) to the serving counterparts.
    pub fn sync_all(&self, include_dense: bool, now: i64) -> Result<SyncRoundStats> {
        let mut stats = SyncRoundStats::default();
        for i in 0..self.num_shards as usize {
            let train = &self.training[i];
            let serve = &self.serving[i];
            if train.version() <= serve.last_applied_from(train.id()) {
                stats.rejected_stale += 1;
                continue;
            }
            let drained = train.drain_touched();
            let dense = include_dense.then(|| train.dense_section());
            let (packet, build) = build_sparse_packet(train, drained, dense, now);
            stats.keys += build.keys;
            stats.skipped_evicted += build.skipped_evicted;
            let bytes = packet.encode();
            stats.bytes += bytes.len() as u64;
            let decoded = SyncPacket::<S>::decode(&bytes, |t| serve.table_dim(t))?;
            if decoded.dense.is_some() {
                stats.dense_blocks += 1;
            }
            apply_packet(serve, &decoded, now)?;
            stats.packets += 1;
        }
        Ok(stats)
    }

    /// Snapshots every training shard under `root`.
    pub fn snapshot_all(&self, root: &Path, now: i64) -> Result<Vec<SnapshotManifest>> {
        self.training
            .iter()
            .map(|shard| snapshot_shard(shard, root, now))
            .collect()
    }

    /// Discards a training shard's live state. Restores from its latest
    /// snapshot under `root` when one exists; otherwise the shard restarts
    /// empty. The serving-side version guard is re-armed either way.
    pub fn inject_failure(&self, shard: ShardId, root: &Path) -> Result<FailureOutcome> {
        let idx = shard.0 as usize;
        if idx >= self.training.len() {
            return Err(Error::contract(format!("no shard {}", shard.0)));
        }
        let seed = derive_seed(self.seed, &format!("train-shard-{}", shard.0));
        let outcome = match find_latest_manifest(root, shard.0) {
            Some(manifest_path) => {
                let restored = restore_shard::<S>(
                    &manifest_path,
                    &self.table_cfgs,
                    Role::Training,
                    seed,
                )?;
                let version = restored.version();
                self.training[idx].replace_state_from(restored);
                self.training[idx].mark_all_touched();
                FailureOutcome::Restored { version }
            }
            None => {
                let (offset, len) = {
                    let block = self.training[idx].dense_block();
                    (block.offset, block.values.len())
                };
                let fresh = PsShard::new(
                    shard.0,
                    Role::Training,
                    &self.table_cfgs,
                    DenseBlock::new(offset, vec![S::zero(); len]),
                    seed,
                )?;
                self.training[idx].replace_state_from(fresh);
                FailureOutcome::Reinitialized
            }
        };
        self.serving[idx].rearm_guard(shard.0);
        Ok(outcome)
    }

    pub fn evict_expired(&self, now: i64) -> usize {
        self.training
            .iter()
            .chain(self.serving.iter())
            .map(|s| s.evict_expired(now))
            .sum()
    }

    /// Summed table stats over training shards.
    pub fn training_stats(&self) -> TableStats {
        let mut total = TableStats::default();
        for shard in &self.training {
            let s = shard.stats();
            total.admitted += s.admitted;
            total.filtered_by_threshold += s.filtered_by_threshold;
            total.filtered_by_probability += s.filtered_by_probability;
            total.evicted += s.evicted;
            total.missing_gradient_keys += s.missing_gradient_keys;
            total.grows += s.grows;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureOutcome {
    Restored { version: u64 },
    Reinitialized,
}

/// Contiguous near-equal split of `len` into `n` ranges.
fn split_ranges(len: usize, n: usize) -> Vec<(usize, usize)> {
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        let start = i * len / n;
        let end = (i + 1) * len / n;
        ranges.push((start, end - start));
    }
    ranges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cluster(num_shards: u32) -> Cluster<f32> {
        let mut cfgs = BTreeMap::new();
        let mut table = TableConfig::new(4);
        table.initial_capacity = 64;
        cfgs.insert(0u16, table);
        let mut linear = TableConfig::new(1);
        linear.initial_capacity = 64;
        cfgs.insert(1u16, linear);
        Cluster::new(num_shards, cfgs, DeepFmConfig::new(1, 4, vec![4, 1]), 7).unwrap()
    }

    #[test]
    fn partition_single_shard_is_zero() {
        for id in [0u64, 1, u64::MAX] {
            assert_eq!(
                partition(FeatureKey::new(0, id), 1).unwrap(),
                ShardId(0)
            );
        }
    }

    #[test]
    fn partition_is_stable() {
        let key = FeatureKey::new(3, 123_456);
        assert_eq!(partition(key, 16).unwrap(), partition(key, 16).unwrap());
        assert!(partition(key, 0).is_err());
    }

    #[test]
    fn partition_spreads_within_fifteen_percent() {
        let shards = 16u32;
        let mut counts = vec![0u64; shards as usize];
        for id in 0..100_000u64 {
            let s = partition(FeatureKey::new(0, id), shards).unwrap();
            counts[s.0 as usize] += 1;
        }
        let mean = 100_000.0 / shards as f64;
        for c in counts {
            let dev = (c as f64 - mean).abs() / mean;
            assert!(dev <= 0.15, "shard deviation {dev}");
        }
    }

    #[test]
    fn split_ranges_cover_exactly() {
        for (len, n) in [(10, 3), (0, 2), (7, 7), (100, 8)] {
            let ranges = split_ranges(len, n);
            assert_eq!(ranges.len(), n);
            let total: usize = ranges.iter().map(|(_, l)| l).sum();
            assert_eq!(total, len);
            let mut at = 0;
            for (start, l) in ranges {
                assert_eq!(start, at);
                at += l;
            }
        }
    }

    #[test]
    fn update_batch_bumps_version_and_marks_touched() {
        let cluster = small_cluster(1);
        let shard = cluster.training(ShardId(0));
        shard.lookup_or_admit(0, 5, 10).unwrap().unwrap();
        let before = shard.version();
        let outcome = shard
            .apply_update_batch(
                &[SparseUpdate {
                    table_id: 0,
                    id: 5,
                    grad: vec![0.1; 4],
                }],
                None,
                0.05,
                0.001,
                10,
            )
            .unwrap();
        assert_eq!(outcome.applied, 1);
        assert_eq!(shard.version(), before + 1);
        assert_eq!(shard.drain_touched(), vec![(0, vec![5])]);
    }

    #[test]
    fn gradient_for_filtered_key_is_counted_missing() {
        let cluster = small_cluster(1);
        let shard = cluster.training(ShardId(0));
        let outcome = shard
            .apply_update_batch(
                &[SparseUpdate {
                    table_id: 0,
                    id: 99,
                    grad: vec![0.1; 4],
                }],
                None,
                0.05,
                0.001,
                0,
            )
            .unwrap();
        assert_eq!(outcome.missing, 1);
        assert!(shard.drain_touched().is_empty());
    }

    #[test]
    fn serving_shards_reject_gradients() {
        let cluster = small_cluster(1);
        let serve = cluster.serving(ShardId(0));
        assert!(serve
            .apply_update_batch(&[], None, 0.05, 0.001, 0)
            .is_err());
    }

    #[test]
    fn sync_moves_trained_vectors_to_serving() {
        let cluster = small_cluster(2);
        let key = FeatureKey::new(0, 77);
        let shard = cluster.route(key);
        cluster.lookup_or_admit(key, 1).unwrap().unwrap();
        cluster
            .training(shard)
            .apply_update_batch(
                &[SparseUpdate {
                    table_id: 0,
                    id: 77,
                    grad: vec![0.5; 4],
                }],
                None,
                0.05,
                0.001,
                1,
            )
            .unwrap();
        assert!(cluster.lookup_serving(key).is_none());
        let stats = cluster.sync_all(true, 2).unwrap();
        assert_eq!(stats.keys, 1);
        let trained = cluster
            .training(shard)
            .lookup_vector(0, 77)
            .unwrap();
        assert_eq!(cluster.lookup_serving(key).unwrap(), trained);
        // Serving dense now equals training dense.
        let train_dense = cluster.gather_dense(Role::Training).unwrap();
        let serve_dense = cluster.gather_dense(Role::Serving).unwrap();
        assert_eq!(train_dense, serve_dense);
    }

    #[test]
    fn second_sync_without_updates_is_skipped() {
        let cluster = small_cluster(1);
        let shard = cluster.training(ShardId(0));
        shard.lookup_or_admit(0, 5, 0).unwrap().unwrap();
        shard
            .apply_update_batch(
                &[SparseUpdate {
                    table_id: 0,
                    id: 5,
                    grad: vec![0.1; 4],
                }],
                None,
                0.05,
                0.001,
                0,
            )
            .unwrap();
        let first = cluster.sync_all(false, 1).unwrap();
        assert_eq!(first.packets, 1);
        let second = cluster.sync_all(false, 2).unwrap();
        assert_eq!(second.packets, 0);
        assert_eq!(second.rejected_stale, 1);
    }

    #[test]
    fn feedback_loss_paper_calculation() {
        let loss = expected_feedback_loss(1_000, 1e-4, 15_000_000, 1.0).unwrap();
        assert_eq!(loss.mean_days_between_failures, 10.0);
        assert_eq!(loss.users_affected_per_failure, 15_000.0);
        assert_eq!(loss.failures_per_day, 0.1);
        assert_eq!(loss.feedback_days_lost_per_failure, 1.0);
    }
}
