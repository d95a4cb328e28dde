//! Two-table cuckoo storage for embeddings.
//!
//! A key lives in exactly one of two bucket arrays, at the slot named by
//! its hash under that array's function. Inserts displace occupants back
//! and forth until everything settles; a displacement chain that exceeds
//! the limit forces the table to double and rehash. Lookups probe at most
//! two slots. Distinct keys never share a stored entry.

use rand::Rng;

use crate::embedding::{EmbeddingEntry, TableConfig};
use crate::embedding::sketch::{CountMinSketch, OccurrenceCounter};
use crate::error::{Error, Result};
use crate::hashing::seeded_mix;
use crate::scalar::Scalar;

/// Displacements tolerated before the table grows.
pub const DISPLACEMENT_LIMIT: usize = 64;

/// Growth triggers when occupancy would pass this fraction of capacity.
pub const MAX_LOAD_FACTOR: f64 = 0.9;

#[derive(Debug, Clone)]
struct Slot<S> {
    id: u64,
    entry: EmbeddingEntry<S>,
}

/// Counters for filter and update behavior, reported per experiment run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TableStats {
    pub admitted: u64,
    pub filtered_by_threshold: u64,
    pub filtered_by_probability: u64,
    pub evicted: u64,
    pub missing_gradient_keys: u64,
    pub grows: u64,
}

#[derive(Debug)]
pub struct CuckooTable<S> {
    cfg: TableConfig,
    /// Bucket arrays; each holds capacity/2 slots.
    t0: Vec<Option<Slot<S>>>,
    t1: Vec<Option<Slot<S>>>,
    len: usize,
    counter: OccurrenceCounter,
    stats: TableStats,
}

impl<S: Scalar> CuckooTable<S> {
    pub fn new(cfg: TableConfig) -> Result<Self> {
        cfg.validate()?;
        let half = (cfg.initial_capacity / 2).max(1);
        let counter = if cfg.exact_counting {
            OccurrenceCounter::Exact(Default::default())
        } else {
            OccurrenceCounter::Sketch(CountMinSketch::new(
                cfg.sketch_rows,
                cfg.sketch_width_log2,
                cfg.hash_seeds.0 ^ cfg.hash_seeds.1,
            ))
        };
        Ok(Self {
            cfg,
            t0: vec![None; half],
            t1: vec![None; half],
            len: 0,
            counter,
            stats: TableStats::default(),
        })
    }

    pub fn config(&self) -> &TableConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total slots across both arrays.
    pub fn capacity(&self) -> usize {
        self.t0.len() + self.t1.len()
    }

    pub fn stats(&self) -> TableStats {
        self.stats
    }

    #[inline]
    fn bucket(&self, side: usize, id: u64) -> usize {
        let seed = if side == 0 {
            self.cfg.hash_seeds.0
        } else {
            self.cfg.hash_seeds.1
        };
        (seeded_mix(id, seed) & (self.t0.len() as u64 - 1)) as usize
    }

    fn side(&self, side: usize) -> &[Option<Slot<S>>] {
        if side == 0 {
            &self.t0
        } else {
            &self.t1
        }
    }

    /// Looks up `id`, reporting how many slots were probed (always <= 2).
    pub fn lookup_with_probes(&self, id: u64) -> (Option<&EmbeddingEntry<S>>, u8) {
        let mut probes = 0;
        for side in 0..2 {
            probes += 1;
            let idx = self.bucket(side, id);
            if let Some(slot) = &self.side(side)[idx] {
                if slot.id == id {
                    return (Some(&slot.entry), probes);
                }
            }
        }
        (None, probes)
    }

    pub fn lookup(&self, id: u64) -> Option<&EmbeddingEntry<S>> {
        self.lookup_with_probes(id).0
    }

    fn lookup_mut(&mut self, id: u64) -> Option<&mut EmbeddingEntry<S>> {
        for side in 0..2 {
            let idx = self.bucket(side, id);
            let arr = if side == 0 { &self.t0 } else { &self.t1 };
            if arr[idx].as_ref().is_some_and(|s| s.id == id) {
                let arr = if side == 0 { &mut self.t0 } else { &mut self.t1 };
                return arr[idx].as_mut().map(|s| &mut s.entry);
            }
        }
        None
    }

    pub fn contains(&self, id: u64) -> bool {
        self.lookup(id).is_some()
    }

    /// Inserts or overwrites. Displaced occupants stay retrievable; a
    /// displacement cycle grows the table and retries.
    pub fn insert(&mut self, id: u64, entry: EmbeddingEntry<S>) -> Result<()> {
        if entry.vector.len() != self.cfg.dim || entry.accumulator.len() != self.cfg.dim {
            return Err(Error::contract(format!(
                "entry width {} does not match table dim {}",
                entry.vector.len(),
                self.cfg.dim
            )));
        }
        if let Some(existing) = self.lookup_mut(id) {
            *existing = entry;
            return Ok(());
        }
        if (self.len + 1) as f64 > MAX_LOAD_FACTOR * self.capacity() as f64 {
            self.grow()?;
        }
        let mut pending = Slot { id, entry };
        loop {
            match place(&mut self.t0, &mut self.t1, &self.cfg, pending) {
                None => {
                    self.len += 1;
                    return Ok(());
                }
                Some(bounced) => {
                    pending = bounced;
                    self.grow()?;
                }
            }
        }
    }

    /// Doubles capacity and rehashes every entry. Key set is unchanged;
    /// on failure the table is left untouched.
    fn grow(&mut self) -> Result<()> {
        let mut half = self.t0.len() * 2;
        let slots: Vec<Slot<S>> = self
            .t0
            .iter()
            .chain(self.t1.iter())
            .filter_map(|s| s.clone())
            .collect();
        loop {
            if half * 2 > self.cfg.max_slots {
                return Err(Error::StorageExhausted {
                    max_slots: self.cfg.max_slots,
                });
            }
            match rebuild(&slots, half, &self.cfg) {
                Some((t0, t1)) => {
                    self.t0 = t0;
                    self.t1 = t1;
                    self.stats.grows += 1;
                    return Ok(());
                }
                None => half *= 2,
            }
        }
    }

    /// Pre-admission occurrence count for `id` (increments, then reports).
    pub fn record_occurrence(&mut self, id: u64) -> u32 {
        self.counter.record(id)
    }

    pub fn occurrence_estimate(&self, id: u64) -> u32 {
        self.counter.estimate(id)
    }

    /// Training-path lookup. Present keys refresh their activity timestamp
    /// and return their vector. Absent keys are counted and admitted only
    /// once they pass the occurrence threshold and the probabilistic
    /// filter; a filtered key yields `None` and the caller feeds a zero
    /// vector forward.
    pub fn lookup_or_admit<R: Rng>(
        &mut self,
        id: u64,
        now: i64,
        rng: &mut R,
    ) -> Result<Option<Vec<S>>> {
        if let Some(entry) = self.lookup_mut(id) {
            entry.last_update = entry.last_update.max(now);
            return Ok(Some(entry.vector.clone()));
        }
        let estimate = self.counter.record(id);
        if estimate < self.cfg.admit_threshold {
            self.stats.filtered_by_threshold += 1;
            return Ok(None);
        }
        if self.cfg.admit_probability < 1.0 && !rng.random_bool(self.cfg.admit_probability) {
            self.stats.filtered_by_probability += 1;
            return Ok(None);
        }
        let entry = EmbeddingEntry::fresh(self.cfg.dim, now, estimate, rng);
        let vector = entry.vector.clone();
        self.insert(id, entry)?;
        self.stats.admitted += 1;
        Ok(Some(vector))
    }

    /// Unconditional upsert of a plain vector (sync-packet application and
    /// width-1 linear terms skip the admission filters).
    pub fn upsert_vector(&mut self, id: u64, vector: &[S], now: i64) -> Result<()> {
        if vector.len() != self.cfg.dim {
            return Err(Error::contract(format!(
                "vector width {} does not match table dim {}",
                vector.len(),
                self.cfg.dim
            )));
        }
        if let Some(entry) = self.lookup_mut(id) {
            entry.vector.clear();
            entry.vector.extend_from_slice(vector);
            entry.last_update = entry.last_update.max(now);
            return Ok(());
        }
        let entry = EmbeddingEntry {
            vector: vector.to_vec(),
            accumulator: vec![S::zero(); self.cfg.dim],
            last_update: now,
            occurrence_estimate: 0,
        };
        self.insert(id, entry)
    }

    /// Adagrad update for a present key; returns false (and counts) when
    /// the key was filtered and holds no entry.
    pub fn apply_gradient(&mut self, id: u64, grad: &[S], lr: S, now: i64) -> Result<bool> {
        if grad.len() != self.cfg.dim {
            return Err(Error::contract(format!(
                "gradient width {} does not match table dim {}",
                grad.len(),
                self.cfg.dim
            )));
        }
        match self.lookup_mut(id) {
            Some(entry) => {
                crate::optim::adagrad_step(&mut entry.vector, &mut entry.accumulator, grad, lr);
                entry.last_update = entry.last_update.max(now);
                Ok(true)
            }
            None => {
                self.stats.missing_gradient_keys += 1;
                Ok(false)
            }
        }
    }

    /// Removes entries inactive for longer than the table's ttl.
    /// A ttl of zero disables expiry.
    pub fn evict_expired(&mut self, now: i64) -> usize {
        if self.cfg.ttl == 0 {
            return 0;
        }
        let ttl = self.cfg.ttl;
        let mut removed = 0;
        for slot in self.t0.iter_mut().chain(self.t1.iter_mut()) {
            if slot
                .as_ref()
                .is_some_and(|s| now - s.entry.last_update > ttl)
            {
                *slot = None;
                removed += 1;
            }
        }
        self.len -= removed;
        self.stats.evicted += removed as u64;
        removed
    }

    pub fn remove(&mut self, id: u64) -> Option<EmbeddingEntry<S>> {
        for side in 0..2 {
            let idx = self.bucket(side, id);
            let arr = if side == 0 { &mut self.t0 } else { &mut self.t1 };
            if arr[idx].as_ref().is_some_and(|s| s.id == id) {
                self.len -= 1;
                return arr[idx].take().map(|s| s.entry);
            }
        }
        None
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &EmbeddingEntry<S>)> {
        self.t0
            .iter()
            .chain(self.t1.iter())
            .filter_map(|s| s.as_ref().map(|s| (s.id, &s.entry)))
    }

    /// Entries in ascending key order; storage-layout independent, used by
    /// snapshots and state comparisons.
    pub fn sorted_entries(&self) -> Vec<(u64, EmbeddingEntry<S>)> {
        let mut v: Vec<_> = self.iter().map(|(id, e)| (id, e.clone())).collect();
        v.sort_by_key(|(id, _)| *id);
        v
    }

    /// True when both tables hold the same keys with the same learned
    /// state (vector, accumulator, last_update).
    pub fn state_eq(&self, other: &Self) -> bool {
        if self.len != other.len {
            return false;
        }
        self.iter().all(|(id, e)| {
            other.lookup(id).is_some_and(|o| {
                o.vector == e.vector
                    && o.accumulator == e.accumulator
                    && o.last_update == e.last_update
            })
        })
    }
}

/// Runs the displacement chain. Returns the homeless slot if the chain
/// exceeds the limit.
fn place<S>(
    t0: &mut [Option<Slot<S>>],
    t1: &mut [Option<Slot<S>>],
    cfg: &TableConfig,
    mut pending: Slot<S>,
) -> Option<Slot<S>> {
    let half = t0.len() as u64 - 1;
    let mut side = 0;
    for _ in 0..DISPLACEMENT_LIMIT {
        let seed = if side == 0 {
            cfg.hash_seeds.0
        } else {
            cfg.hash_seeds.1
        };
        let idx = (seeded_mix(pending.id, seed) & half) as usize;
        let slot = if side == 0 { &mut t0[idx] } else { &mut t1[idx] };
        match slot.take() {
            None => {
                *slot = Some(pending);
                return None;
            }
            Some(prev) => {
                *slot = Some(pending);
                pending = prev;
                side = 1 - side;
            }
        }
    }
    Some(pending)
}

fn rebuild<S: Scalar>(
    slots: &[Slot<S>],
    half: usize,
    cfg: &TableConfig,
) -> Option<(Vec<Option<Slot<S>>>, Vec<Option<Slot<S>>>)> {
    let mut t0 = vec![None; half];
    let mut t1 = vec![None; half];
    for slot in slots {
        if place(&mut t0, &mut t1, cfg, slot.clone()).is_some() {
            return None;
        }
    }
    Some((t0, t1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::TableConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn cfg(dim: usize) -> TableConfig {
        TableConfig::new(dim)
    }

    fn entry(dim: usize, fill: f32) -> EmbeddingEntry<f32> {
        EmbeddingEntry {
            vector: vec![fill; dim],
            accumulator: vec![0.0; dim],
            last_update: 0,
            occurrence_estimate: 1,
        }
    }

    #[test]
    fn insert_then_lookup_single_element() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(4)).unwrap();
        t.insert(42, entry(4, 1.5)).unwrap();
        assert_eq!(t.lookup(42).unwrap().vector, vec![1.5; 4]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn lookup_absent_is_none_and_probes_at_most_two() {
        let t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        let (found, probes) = t.lookup_with_probes(7);
        assert!(found.is_none());
        assert!(probes <= 2);
    }

    /// Brute-force two ids that share an h0 bucket under the fixed seeds;
    /// after inserting both, one must sit in each array.
    #[test]
    fn engineered_h0_collision_keeps_both_retrievable() {
        let config = cfg(2);
        let mut t: CuckooTable<f32> = CuckooTable::new(config.clone()).unwrap();
        let half = (config.initial_capacity / 2) as u64;
        let target = seeded_mix(1, config.hash_seeds.0) & (half - 1);
        let other = (2..)
            .find(|&id| seeded_mix(id, config.hash_seeds.0) & (half - 1) == target)
            .unwrap();
        t.insert(1, entry(2, 1.0)).unwrap();
        t.insert(other, entry(2, 2.0)).unwrap();
        assert_eq!(t.lookup(1).unwrap().vector, vec![1.0; 2]);
        assert_eq!(t.lookup(other).unwrap().vector, vec![2.0; 2]);
        // They collided at h0, so they cannot both be in t0.
        let in_t0 = |id: u64| {
            let idx = (seeded_mix(id, config.hash_seeds.0) & (half - 1)) as usize;
            t.t0[idx].as_ref().is_some_and(|s| s.id == id)
        };
        assert!(in_t0(1) != in_t0(other));
    }

    #[test]
    fn growth_preserves_all_keys() {
        let mut config = cfg(2);
        config.initial_capacity = 8;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        for id in 0..500u64 {
            t.insert(id, entry(2, id as f32)).unwrap();
        }
        assert!(t.stats().grows > 0, "expected at least one growth");
        for id in 0..500u64 {
            assert_eq!(t.lookup(id).unwrap().vector[0], id as f32);
        }
        assert_eq!(t.len(), 500);
    }

    #[test]
    fn overwrite_keeps_len() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        t.insert(5, entry(2, 1.0)).unwrap();
        t.insert(5, entry(2, 9.0)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.lookup(5).unwrap().vector, vec![9.0; 2]);
    }

    #[test]
    fn storage_exhausted_when_growth_hits_limit() {
        let mut config = cfg(1);
        config.initial_capacity = 4;
        config.max_slots = 8;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        let mut hit_limit = false;
        for id in 0..64u64 {
            match t.insert(id, entry(1, 0.0)) {
                Ok(()) => {}
                Err(Error::StorageExhausted { .. }) => {
                    hit_limit = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(hit_limit);
    }

    #[test]
    fn admission_threshold_counts_exactly() {
        let mut config = cfg(2);
        config.admit_threshold = 5;
        config.exact_counting = true;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for call in 1..=4 {
            assert!(
                t.lookup_or_admit(77, call, &mut rng).unwrap().is_none(),
                "call {call} must be filtered"
            );
        }
        assert!(t.lookup_or_admit(77, 5, &mut rng).unwrap().is_some());
        assert_eq!(t.stats().filtered_by_threshold, 4);
        assert_eq!(t.stats().admitted, 1);
    }

    #[test]
    fn filters_disabled_admits_first_sight() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in 0..50u64 {
            assert!(t.lookup_or_admit(id, 0, &mut rng).unwrap().is_some());
        }
        assert_eq!(t.len(), 50);
    }

    #[test]
    fn bernoulli_admission_fraction_within_binomial_interval() {
        let mut config = cfg(2);
        config.admit_probability = 0.5;
        config.initial_capacity = 16_384;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut admitted = 0usize;
        for id in 0..10_000u64 {
            if t.lookup_or_admit(id, 0, &mut rng).unwrap().is_some() {
                admitted += 1;
            }
        }
        let frac = admitted as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&frac), "admitted fraction {frac}");
    }

    #[test]
    fn refresh_updates_last_activity_monotonically() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        t.lookup_or_admit(9, 100, &mut rng).unwrap();
        t.lookup_or_admit(9, 50, &mut rng).unwrap();
        assert_eq!(t.lookup(9).unwrap().last_update, 100);
        t.lookup_or_admit(9, 200, &mut rng).unwrap();
        assert_eq!(t.lookup(9).unwrap().last_update, 200);
    }

    #[test]
    fn ttl_zero_never_evicts() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        t.insert(1, entry(2, 1.0)).unwrap();
        assert_eq!(t.evict_expired(i64::MAX), 0);
        assert!(t.contains(1));
    }

    #[test]
    fn eviction_removes_only_stale_entries() {
        let mut config = cfg(2);
        config.ttl = 100;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        let mut stale = entry(2, 1.0);
        stale.last_update = 0;
        let mut fresh = entry(2, 2.0);
        fresh.last_update = 150;
        t.insert(1, stale).unwrap();
        t.insert(2, fresh).unwrap();
        assert_eq!(t.evict_expired(200), 1);
        assert!(!t.contains(1));
        assert!(t.contains(2));
        // Lookup after eviction is absent.
        assert!(t.lookup(1).is_none());
    }

    #[test]
    fn eviction_boundary_is_strict() {
        let mut config = cfg(1);
        config.ttl = 100;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        let mut e = entry(1, 1.0);
        e.last_update = 100;
        t.insert(1, e).unwrap();
        // now - last_update == ttl exactly: not expired.
        assert_eq!(t.evict_expired(200), 0);
        assert_eq!(t.evict_expired(201), 1);
    }

    #[test]
    fn eviction_matches_shadow_map_filter() {
        let mut config = cfg(2);
        config.ttl = 50;
        config.exact_counting = true;
        let mut t: CuckooTable<f32> = CuckooTable::new(config).unwrap();
        let mut shadow: HashMap<u64, i64> = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for step in 0..2_000i64 {
            let id = rng.random_range(0..300u64);
            t.lookup_or_admit(id, step, &mut rng).unwrap();
            shadow.insert(id, step);
        }
        let now = 2_000i64;
        t.evict_expired(now);
        shadow.retain(|_, ts| now - *ts <= 50);
        let survivors: Vec<u64> = t.iter().map(|(id, _)| id).collect();
        assert_eq!(survivors.len(), shadow.len());
        for id in survivors {
            assert!(shadow.contains_key(&id));
        }
    }

    #[test]
    fn gradient_on_absent_key_is_counted_noop() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        assert!(!t.apply_gradient(123, &[0.1, 0.2], 0.05, 0).unwrap());
        assert_eq!(t.stats().missing_gradient_keys, 1);
    }

    #[test]
    fn gradient_shape_mismatch_is_contract_error() {
        let mut t: CuckooTable<f32> = CuckooTable::new(cfg(2)).unwrap();
        t.insert(1, entry(2, 0.0)).unwrap();
        assert!(matches!(
            t.apply_gradient(1, &[0.1], 0.05, 0),
            Err(Error::Contract(_))
        ));
    }
}
