//! Out-of-order stream join of feature logs and user-action logs.
//!
//! Features wait in an in-memory cache keyed by request key; entries
//! older than the memory window spill to an on-disk store. An arriving
//! action looks up memory first, then disk, and emits one labeled
//! example per request key. Early actions (feature not yet seen) wait in
//! their own buffer. All windows run on event time, so replays are
//! deterministic.

pub mod spill;
pub mod textio;

pub use spill::SpillStore;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Example, FeatureKey};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLog {
    pub request_key: u64,
    pub features: Vec<FeatureKey>,
    pub ts: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Positive,
    Negative,
}

impl ActionKind {
    pub fn label(self) -> u8 {
        match self {
            ActionKind::Positive => 1,
            ActionKind::Negative => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionLog {
    pub request_key: u64,
    pub action: ActionKind,
    pub ts: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeoutPolicy {
    /// Expired features disappear (actions derive labels, not timeouts).
    Drop,
    /// Expired features become negative examples (impression-style data).
    EmitNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinerConfig {
    /// Seconds a feature stays in memory before spilling to disk.
    pub memory_window: i64,
    /// Seconds a feature stays pending (memory + disk) in total.
    pub disk_ttl: i64,
    /// Fraction of negatives kept by sampling, in (0, 1].
    pub negative_rate: f64,
    pub timeout_policy: TimeoutPolicy,
    /// Seconds an early action waits for its feature.
    pub action_wait: i64,
}

impl JoinerConfig {
    pub fn new(memory_window: i64, disk_ttl: i64) -> Self {
        Self {
            memory_window,
            disk_ttl,
            negative_rate: 1.0,
            timeout_policy: TimeoutPolicy::Drop,
            action_wait: memory_window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory_window < 0 || self.action_wait < 0 {
            return Err(Error::config("windows must be >= 0 seconds"));
        }
        if self.disk_ttl < self.memory_window {
            return Err(Error::config(format!(
                "disk_ttl {} must be >= memory_window {}",
                self.disk_ttl, self.memory_window
            )));
        }
        if !(self.negative_rate > 0.0 && self.negative_rate <= 1.0) {
            return Err(Error::config(format!(
                "negative_rate must be in (0, 1], got {}",
                self.negative_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinerCounters {
    pub features_seen: u64,
    pub actions_seen: u64,
    pub joined: u64,
    pub joined_via_disk: u64,
    pub duplicate_features: u64,
    pub duplicate_actions: u64,
    /// Actions whose feature never arrived within the wait window.
    pub action_misses: u64,
    pub spilled: u64,
    pub expired_dropped: u64,
    pub expired_emitted_negative: u64,
}

#[derive(Debug)]
pub struct Joiner {
    cfg: JoinerConfig,
    watermark: i64,
    memory: HashMap<u64, FeatureLog>,
    memory_by_time: BTreeSet<(i64, u64)>,
    disk: SpillStore,
    disk_by_time: BTreeSet<(i64, u64)>,
    pending_actions: HashMap<u64, ActionLog>,
    actions_by_time: BTreeSet<(i64, u64)>,
    counters: JoinerCounters,
}

impl Joiner {
    /// `spill_path` holds the on-disk store; it is created/truncated.
    pub fn new(cfg: JoinerConfig, spill_path: &Path) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            watermark: i64::MIN,
            memory: HashMap::new(),
            memory_by_time: BTreeSet::new(),
            disk: SpillStore::create(spill_path)?,
            disk_by_time: BTreeSet::new(),
            pending_actions: HashMap::new(),
            actions_by_time: BTreeSet::new(),
            counters: JoinerCounters::default(),
        })
    }

    pub fn counters(&self) -> JoinerCounters {
        self.counters
    }

    pub fn watermark(&self) -> i64 {
        self.watermark
    }

    pub fn pending_in_memory(&self) -> usize {
        self.memory.len()
    }

    pub fn pending_on_disk(&self) -> usize {
        self.disk.len()
    }

    /// Advances event time: spills memory entries past the window and
    /// expires actions that waited too long.
    fn advance(&mut self, ts: i64) -> Result<()> {
        if ts <= self.watermark {
            return Ok(());
        }
        self.watermark = ts;
        // Entries with watermark - ts > memory_window move to disk.
        loop {
            let Some(&(entry_ts, key)) = self.memory_by_time.first() else {
                break;
            };
            if self.watermark - entry_ts <= self.cfg.memory_window {
                break;
            }
            self.memory_by_time.pop_first();
            if let Some(log) = self.memory.remove(&key) {
                self.disk.put(&log)?;
                self.disk_by_time.insert((log.ts, key));
                self.counters.spilled += 1;
            }
        }
        // Early actions expire after action_wait.
        loop {
            let Some(&(action_ts, key)) = self.actions_by_time.first() else {
                break;
            };
            if self.watermark - action_ts <= self.cfg.action_wait {
                break;
            }
            self.actions_by_time.pop_first();
            if self.pending_actions.remove(&key).is_some() {
                self.counters.action_misses += 1;
            }
        }
        Ok(())
    }

    fn emit(&mut self, features: Vec<FeatureKey>, action: &ActionLog, feature_ts: i64) -> Example {
        self.counters.joined += 1;
        Example::new(feature_ts.max(action.ts), action.action.label(), features)
    }

    /// Stores a feature log, joining immediately when its action already
    /// waits. Duplicate request keys keep the newest log.
    pub fn ingest_feature(&mut self, log: FeatureLog) -> Result<Option<Example>> {
        self.counters.features_seen += 1;
        self.advance(log.ts)?;
        if let Some(action) = self.pending_actions.remove(&log.request_key) {
            self.actions_by_time.remove(&(action.ts, action.request_key));
            return Ok(Some(self.emit(log.features, &action, log.ts)));
        }
        if let Some(old) = self.memory.remove(&log.request_key) {
            self.memory_by_time.remove(&(old.ts, old.request_key));
            self.counters.duplicate_features += 1;
        } else if self.disk.contains(log.request_key) {
            self.disk.remove(log.request_key);
            self.disk_by_time.retain(|&(_, k)| k != log.request_key);
            self.counters.duplicate_features += 1;
        }
        self.memory_by_time.insert((log.ts, log.request_key));
        self.memory.insert(log.request_key, log);
        Ok(None)
    }

    /// Pairs an action with its feature log: memory first, then disk. A
    /// miss buffers the action for `action_wait`, after which it drops
    /// with a counter. A feature already past `disk_ttl` no longer joins
    /// (it awaits finalization by `flush_expired`).
    pub fn ingest_action(&mut self, log: ActionLog, now: i64) -> Result<Option<Example>> {
        self.counters.actions_seen += 1;
        self.advance(log.ts.max(now))?;
        if let Some(feature) = self.memory.remove(&log.request_key) {
            self.memory_by_time.remove(&(feature.ts, feature.request_key));
            return Ok(Some(self.emit(feature.features, &log, feature.ts)));
        }
        match self.disk.get(log.request_key)? {
            Some(feature) if self.watermark - feature.ts <= self.cfg.disk_ttl => {
                self.disk.remove(log.request_key);
                self.disk_by_time.remove(&(feature.ts, feature.request_key));
                self.counters.joined_via_disk += 1;
                return Ok(Some(self.emit(feature.features, &log, feature.ts)));
            }
            _ => {}
        }
        if self.pending_actions.contains_key(&log.request_key) {
            self.counters.duplicate_actions += 1;
            return Ok(None);
        }
        self.actions_by_time.insert((log.ts, log.request_key));
        self.pending_actions.insert(log.request_key, log);
        Ok(None)
    }

    /// Finalizes pending features older than `disk_ttl` per the timeout
    /// policy. Only entries strictly older than the ttl are touched.
    pub fn flush_expired(&mut self, now: i64) -> Result<Vec<Example>> {
        self.advance(now)?;
        let mut emitted = Vec::new();
        let policy = self.cfg.timeout_policy;
        let finalize = |log: FeatureLog,
                        counters: &mut JoinerCounters,
                        emitted: &mut Vec<Example>| {
            match policy {
                TimeoutPolicy::Drop => counters.expired_dropped += 1,
                TimeoutPolicy::EmitNegative => {
                    counters.expired_emitted_negative += 1;
                    emitted.push(Example::new(log.ts, 0, log.features));
                }
            }
        };
        loop {
            let Some(&(ts, key)) = self.disk_by_time.first() else {
                break;
            };
            if self.watermark - ts <= self.cfg.disk_ttl {
                break;
            }
            self.disk_by_time.pop_first();
            if let Some(log) = self.disk.get(key)? {
                self.disk.remove(key);
                finalize(log, &mut self.counters, &mut emitted);
            }
        }
        // A watermark jump can expire entries straight out of memory.
        loop {
            let Some(&(ts, key)) = self.memory_by_time.first() else {
                break;
            };
            if self.watermark - ts <= self.cfg.disk_ttl {
                break;
            }
            self.memory_by_time.pop_first();
            if let Some(log) = self.memory.remove(&key) {
                finalize(log, &mut self.counters, &mut emitted);
            }
        }
        self.disk.maybe_compact()?;
        Ok(emitted)
    }
}

/// Keeps positives always and negatives with probability `rate`; survivors
/// are flagged `sampled` whenever `rate < 1`.
pub fn negative_sample<R: Rng>(
    mut example: Example,
    rate: f64,
    rng: &mut R,
) -> Result<Option<Example>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::contract(format!(
            "negative sampling rate must be in (0, 1], got {rate}"
        )));
    }
    if example.label == 0 && rate < 1.0 && !rng.random_bool(rate) {
        return Ok(None);
    }
    example.sampled = rate < 1.0;
    Ok(Some(example))
}

/// Serving-time correction for negative sampling at rate `r`:
/// `p' = p / (p + (1 - p) / r)`, i.e. `logit' = logit + ln r`.
pub fn log_odds_correct(p: f64, rate: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::contract(format!(
            "probability must be in (0, 1), got {p}"
        )));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::contract(format!(
            "sampling rate must be in (0, 1], got {rate}"
        )));
    }
    Ok(p / (p + (1.0 - p) / rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn feature(key: u64, ts: i64) -> FeatureLog {
        FeatureLog {
            request_key: key,
            features: vec![FeatureKey::new(0, key), FeatureKey::new(1, key + 1)],
            ts,
        }
    }

    fn action(key: u64, ts: i64, kind: ActionKind) -> ActionLog {
        ActionLog {
            request_key: key,
            action: kind,
            ts,
        }
    }

    fn joiner(cfg: JoinerConfig) -> (Joiner, tempfile::TempDir) {
        let dir = tempdir().unwrap();
        let j = Joiner::new(cfg, &dir.path().join("spill.log")).unwrap();
        (j, dir)
    }

    #[test]
    fn immediate_join_same_key() {
        let (mut j, _dir) = joiner(JoinerConfig::new(100, 1000));
        assert!(j.ingest_feature(feature(1, 10)).unwrap().is_none());
        let ex = j
            .ingest_action(action(1, 12, ActionKind::Positive), 12)
            .unwrap()
            .unwrap();
        assert_eq!(ex.label, 1);
        assert_eq!(ex.ts, 12);
        assert_eq!(ex.features, feature(1, 10).features);
        assert_eq!(j.counters().joined, 1);
    }

    #[test]
    fn join_through_disk_after_memory_window() {
        let (mut j, _dir) = joiner(JoinerConfig::new(100, 100_000));
        j.ingest_feature(feature(1, 0)).unwrap();
        // Advance event time well past the memory window via another feature.
        j.ingest_feature(feature(2, 500)).unwrap();
        assert_eq!(j.pending_in_memory(), 1);
        assert_eq!(j.pending_on_disk(), 1);
        let ex = j
            .ingest_action(action(1, 600, ActionKind::Negative), 600)
            .unwrap()
            .unwrap();
        assert_eq!(ex.label, 0);
        assert_eq!(j.counters().joined_via_disk, 1);
        assert_eq!(j.pending_on_disk(), 0);
    }

    #[test]
    fn duplicate_feature_keeps_newest() {
        let (mut j, _dir) = joiner(JoinerConfig::new(100, 1000));
        j.ingest_feature(feature(1, 10)).unwrap();
        let mut newer = feature(1, 20);
        newer.features = vec![FeatureKey::new(0, 999)];
        j.ingest_feature(newer.clone()).unwrap();
        assert_eq!(j.counters().duplicate_features, 1);
        let ex = j
            .ingest_action(action(1, 25, ActionKind::Positive), 25)
            .unwrap()
            .unwrap();
        assert_eq!(ex.features, newer.features);
        assert_eq!(j.counters().joined, 1);
    }

    #[test]
    fn action_before_feature_joins_within_wait() {
        let (mut j, _dir) = joiner(JoinerConfig::new(100, 1000));
        assert!(j
            .ingest_action(action(1, 10, ActionKind::Positive), 10)
            .unwrap()
            .is_none());
        let ex = j.ingest_feature(feature(1, 30)).unwrap().unwrap();
        assert_eq!(ex.label, 1);
        assert_eq!(ex.ts, 30);
        assert_eq!(j.counters().joined, 1);
    }

    #[test]
    fn unmatched_action_expires_with_miss_counter() {
        let (mut j, _dir) = joiner(JoinerConfig::new(100, 1000));
        j.ingest_action(action(1, 10, ActionKind::Positive), 10)
            .unwrap();
        j.flush_expired(10 + 100 + 1).unwrap();
        assert_eq!(j.counters().action_misses, 1);
        // The feature arriving later finds nothing.
        assert!(j.ingest_feature(feature(1, 200)).unwrap().is_none());
        assert_eq!(j.counters().joined, 0);
    }

    #[test]
    fn duplicate_action_counted_once_joined() {
        let (mut j, _dir) = joiner(JoinerConfig::new(100, 1000));
        j.ingest_action(action(1, 10, ActionKind::Positive), 10)
            .unwrap();
        j.ingest_action(action(1, 11, ActionKind::Negative), 11)
            .unwrap();
        assert_eq!(j.counters().duplicate_actions, 1);
        // First action wins the join.
        let ex = j.ingest_feature(feature(1, 20)).unwrap().unwrap();
        assert_eq!(ex.label, 1);
    }

    /// Every interleaving of one feature and one action within the windows
    /// yields exactly one join.
    #[test]
    fn exactly_once_over_arrival_permutations() {
        for (f_ts, a_ts, feature_first) in [
            (0i64, 0i64, true),
            (0, 0, false),
            (0, 50, true),
            (0, 50, false),
            (50, 0, true),
            (50, 0, false),
            (0, 99, true),
            (99, 0, false),
        ] {
            let (mut j, _dir) = joiner(JoinerConfig::new(100, 1000));
            let mut emitted = 0;
            if feature_first {
                emitted += j.ingest_feature(feature(7, f_ts)).unwrap().iter().count();
                emitted += j
                    .ingest_action(action(7, a_ts, ActionKind::Positive), a_ts)
                    .unwrap()
                    .iter()
                    .count();
            } else {
                emitted += j
                    .ingest_action(action(7, a_ts, ActionKind::Positive), a_ts)
                    .unwrap()
                    .iter()
                    .count();
                emitted += j.ingest_feature(feature(7, f_ts)).unwrap().iter().count();
            }
            emitted += j.flush_expired(2_000).unwrap().len();
            assert_eq!(
                emitted, 1,
                "f_ts {f_ts} a_ts {a_ts} feature_first {feature_first}"
            );
            assert_eq!(j.counters().joined, 1);
        }
    }

    #[test]
    fn shuffled_pairs_join_exactly_once_each() {
        let (mut j, _dir) = joiner(JoinerConfig::new(50, 10_000));
        let n = 10_000u64;
        #[derive(Clone)]
        enum Ev {
            F(FeatureLog),
            A(ActionLog),
        }
        let mut events: Vec<(i64, Ev)> = Vec::with_capacity(2 * n as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for k in 0..n {
            let base = rng.random_range(0..100_000i64);
            let lag = rng.random_range(0..40i64);
            events.push((base, Ev::F(feature(k, base))));
            events.push((base + lag, Ev::A(action(k, base + lag, ActionKind::Positive))));
        }
        // Deliver slightly out of order: sort by ts then jitter locally.
        events.sort_by_key(|(ts, _)| *ts);
        for chunk in events.chunks_mut(8) {
            let l = chunk.len();
            chunk.swap(0, l - 1);
        }
        let mut joined = 0u64;
        for (_, ev) in events {
            let out = match ev {
                Ev::F(f) => j.ingest_feature(f).unwrap(),
                Ev::A(a) => {
                    let now = a.ts;
                    j.ingest_action(a, now).unwrap()
                }
            };
            joined += out.iter().count() as u64;
        }
        joined += j.flush_expired(1_000_000).unwrap().len() as u64;
        assert_eq!(joined, n);
        assert_eq!(j.counters().joined, n);
        assert_eq!(j.counters().duplicate_actions, 0);
    }

    #[test]
    fn flush_drop_policy_counts_without_emitting() {
        let (mut j, _dir) = joiner(JoinerConfig::new(10, 100));
        j.ingest_feature(feature(1, 0)).unwrap();
        let out = j.flush_expired(101).unwrap();
        assert!(out.is_empty());
        assert_eq!(j.counters().expired_dropped, 1);
        assert_eq!(j.pending_in_memory() + j.pending_on_disk(), 0);
    }

    #[test]
    fn flush_emit_negative_policy_yields_label_zero() {
        let mut cfg = JoinerConfig::new(10, 100);
        cfg.timeout_policy = TimeoutPolicy::EmitNegative;
        let (mut j, _dir) = joiner(cfg);
        j.ingest_feature(feature(1, 0)).unwrap();
        let out = j.flush_expired(101).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, 0);
        assert_eq!(out[0].features, feature(1, 0).features);
    }

    #[test]
    fn action_beyond_disk_ttl_does_not_join() {
        let (mut j, _dir) = joiner(JoinerConfig::new(10, 100));
        j.ingest_feature(feature(1, 0)).unwrap();
        // The action arrives with the feature already 150s old.
        let out = j
            .ingest_action(action(1, 150, ActionKind::Positive), 150)
            .unwrap();
        assert!(out.is_none());
        assert_eq!(j.counters().joined, 0);
        // The stale feature is finalized by the flush, not the lookup.
        j.flush_expired(151).unwrap();
        assert_eq!(j.counters().expired_dropped, 1);
        // The buffered action eventually drops with a miss counter.
        j.flush_expired(300).unwrap();
        assert_eq!(j.counters().action_misses, 1);
    }

    #[test]
    fn flush_boundary_is_strict() {
        let (mut j, _dir) = joiner(JoinerConfig::new(10, 100));
        j.ingest_feature(feature(1, 0)).unwrap();
        // now - ts == disk_ttl exactly: still pending.
        assert!(j.flush_expired(100).unwrap().is_empty());
        assert_eq!(j.counters().expired_dropped, 0);
        j.flush_expired(101).unwrap();
        assert_eq!(j.counters().expired_dropped, 1);
    }

    #[test]
    fn nothing_younger_than_ttl_is_flushed_randomized() {
        let mut cfg = JoinerConfig::new(20, 200);
        cfg.timeout_policy = TimeoutPolicy::EmitNegative;
        let (mut j, _dir) = joiner(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut shadow: HashMap<u64, i64> = HashMap::new();
        let mut emitted: Vec<Example> = Vec::new();
        let mut now = 0i64;
        for k in 0..2_000u64 {
            now += rng.random_range(0..3i64);
            j.ingest_feature(feature(k, now)).unwrap();
            shadow.insert(k, now);
            if k % 97 == 0 {
                for ex in j.flush_expired(now).unwrap() {
                    // Nothing younger than the ttl is ever flushed.
                    assert!(now - ex.ts > 200, "flushed entry aged {}", now - ex.ts);
                    emitted.push(ex);
                }
            }
        }
        let final_now = now + 1_000;
        emitted.extend(j.flush_expired(final_now).unwrap());
        // With the final flush far in the future, every pending entry is
        // finalized exactly once with its original timestamp.
        assert_eq!(emitted.len(), 2_000);
        for ex in &emitted {
            let ts = shadow[&ex.features[0].id];
            assert_eq!(ex.ts, ts);
        }
    }

    #[test]
    fn memory_bound_holds_after_every_ingest() {
        let (mut j, _dir) = joiner(JoinerConfig::new(30, 10_000));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut now = 0i64;
        for k in 0..1_000u64 {
            now += rng.random_range(0..4i64);
            j.ingest_feature(feature(k, now)).unwrap();
            // No in-memory entry is older than the window.
            for (_, log) in j.memory.iter() {
                assert!(j.watermark - log.ts <= 30);
            }
        }
    }

    #[test]
    fn negative_sample_rate_one_keeps_all_unflagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for label in [0u8, 1u8] {
            let ex = Example::new(0, label, vec![FeatureKey::new(0, 1)]);
            let kept = negative_sample(ex, 1.0, &mut rng).unwrap().unwrap();
            assert!(!kept.sampled);
        }
    }

    #[test]
    fn negative_sample_always_keeps_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1_000 {
            let ex = Example::new(0, 1, vec![FeatureKey::new(0, 1)]);
            let kept = negative_sample(ex, 0.01, &mut rng).unwrap().unwrap();
            assert!(kept.sampled);
        }
    }

    #[test]
    fn negative_sample_fraction_within_binomial_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut kept = 0u64;
        for _ in 0..100_000 {
            let ex = Example::new(0, 0, vec![FeatureKey::new(0, 1)]);
            if negative_sample(ex, 0.1, &mut rng).unwrap().is_some() {
                kept += 1;
            }
        }
        let frac = kept as f64 / 100_000.0;
        assert!((0.094..=0.106).contains(&frac), "kept fraction {frac}");
    }

    #[test]
    fn log_odds_identity_at_rate_one() {
        for p in [0.01, 0.3, 0.5, 0.99] {
            assert!((log_odds_correct(p, 1.0).unwrap() - p).abs() < 1e-15);
        }
    }

    #[test]
    fn log_odds_known_value() {
        let p = log_odds_correct(0.5, 0.1).unwrap();
        assert!((p - 0.5 / (0.5 + 5.0)).abs() < 1e-12);
        assert!((p - 0.090909).abs() < 1e-4);
    }

    #[test]
    fn log_odds_decreasing_in_inverse_rate_and_order_preserving() {
        // Stronger sampling (smaller r) pushes corrected probabilities down.
        let mut last = 1.0;
        for r in [1.0, 0.5, 0.25, 0.1, 0.01] {
            let p = log_odds_correct(0.4, r).unwrap();
            assert!(p < last || r == 1.0);
            last = p;
        }
        // Score order across examples is preserved at a fixed rate.
        let ps = [0.1, 0.2, 0.5, 0.7, 0.95];
        let corrected: Vec<f64> = ps
            .iter()
            .map(|&p| log_odds_correct(p, 0.1).unwrap())
            .collect();
        for w in corrected.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn log_odds_contract_errors() {
        assert!(log_odds_correct(0.0, 0.5).is_err());
        assert!(log_odds_correct(1.0, 0.5).is_err());
        assert!(log_odds_correct(0.5, 0.0).is_err());
        assert!(log_odds_correct(0.5, 1.5).is_err());
    }
}
