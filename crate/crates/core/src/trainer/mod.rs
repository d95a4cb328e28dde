//! Training drivers: one-pass batch training, the simulated online
//! training loop (sync to serving, evaluate the serving model on the next
//! data shard, then train on it), and the evaluation path.
//!
//! Sparse features resolve through a [`SparseScheme`]: collisionless
//! tables keyed by raw ids, or the hashed baseline that sums a
//! remainder-table and quotient-table embedding per id.

pub mod experiments;
pub mod metrics_io;

pub use metrics_io::MetricsRow;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embedding::{decompose_id, TableConfig};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::model::{self, metrics, DeepFmConfig, DenseParams};
use crate::ps::{Cluster, Role, ShardId, SparseUpdate};
use crate::scalar::Scalar;
use crate::sync::{SyncAction, SyncSchedule};
use crate::types::Example;

/// How a slot's raw id maps onto embedding-table keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SparseScheme {
    /// One collisionless table per slot, keyed by the raw id.
    Collisionless,
    /// Hashed baseline: the embedding is the sum of a remainder-table
    /// entry (`id % modulus`) and a quotient-table entry (`id / modulus`),
    /// so ids sharing a component share part of their representation.
    Decomposed { modulus: u64 },
}

impl SparseScheme {
    pub fn validate(&self) -> Result<()> {
        match self {
            SparseScheme::Collisionless => Ok(()),
            SparseScheme::Decomposed { modulus } => decompose_id(0, *modulus).map(|_| ()),
        }
    }

    /// (embedding table, linear table, key) components of one slot id.
    fn components(&self, slot: u16, id: u64) -> Vec<(u16, u16, u64)> {
        match self {
            SparseScheme::Collisionless => vec![(2 * slot, 2 * slot + 1, id)],
            SparseScheme::Decomposed { modulus } => {
                let (q, r) = decompose_id(id, *modulus).expect("validated modulus");
                vec![
                    (4 * slot, 4 * slot + 2, r),
                    (4 * slot + 1, 4 * slot + 3, q),
                ]
            }
        }
    }

    fn table_ids(&self, num_slots: usize) -> Vec<(u16, usize)> {
        // (table_id, dim-kind): dim-kind 0 = embedding width, 1 = linear.
        let mut out = Vec::new();
        for slot in 0..num_slots as u16 {
            match self {
                SparseScheme::Collisionless => {
                    out.push((2 * slot, 0));
                    out.push((2 * slot + 1, 1));
                }
                SparseScheme::Decomposed { .. } => {
                    out.push((4 * slot, 0));
                    out.push((4 * slot + 1, 0));
                    out.push((4 * slot + 2, 1));
                    out.push((4 * slot + 3, 1));
                }
            }
        }
        out
    }
}

/// Shared per-table settings applied to every slot's tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTemplate {
    pub admit_threshold: u32,
    pub admit_probability: f64,
    pub ttl: i64,
    pub initial_capacity: usize,
    pub exact_counting: bool,
}

impl Default for TableTemplate {
    fn default() -> Self {
        Self {
            admit_threshold: 0,
            admit_probability: 1.0,
            ttl: 0,
            initial_capacity: 4_096,
            exact_counting: false,
        }
    }
}

/// Builds the table map for a model under a scheme; hash seeds derive per
/// table from the master seed.
pub fn build_table_configs(
    model: &DeepFmConfig,
    scheme: SparseScheme,
    template: &TableTemplate,
    master_seed: u64,
) -> BTreeMap<u16, TableConfig> {
    let mut cfgs = BTreeMap::new();
    for (table_id, kind) in scheme.table_ids(model.num_slots) {
        let mut cfg = TableConfig::new(if kind == 0 { model.dim } else { 1 });
        cfg.admit_threshold = template.admit_threshold;
        cfg.admit_probability = template.admit_probability;
        cfg.ttl = template.ttl;
        cfg.initial_capacity = template.initial_capacity;
        cfg.exact_counting = template.exact_counting;
        cfg.hash_seeds = (
            derive_seed(master_seed, &format!("table-{table_id}-h0")),
            derive_seed(master_seed, &format!("table-{table_id}-h1")),
        );
        cfgs.insert(table_id, cfg);
    }
    cfgs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub sparse_lr: f64,
    pub dense_lr: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            batch_size: 256,
            sparse_lr: 0.05,
            dense_lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePlan {
    pub shard: u32,
    pub at_step: u64,
}

/// Step-level side effects of a run.
#[derive(Debug, Clone, Default)]
pub struct RunHooks {
    /// Snapshot all training shards every this many steps.
    pub snapshot_every: Option<u64>,
    pub snapshot_dir: Option<PathBuf>,
    pub failure: Option<FailurePlan>,
    /// Optional step-interval syncing inside training phases.
    pub schedule: Option<SyncSchedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Synced { step: u64, dense: bool },
    Evaluated { shard: usize, step: u64 },
    TrainedShard { shard: usize, step: u64 },
    SnapshotTaken { step: u64 },
    FailureInjected { step: u64, shard: u32, restored: bool },
}

/// Mutable bookkeeping threaded through one experiment run.
#[derive(Debug, Default)]
pub struct RunState {
    pub step: u64,
    pub now: i64,
    pub examples_seen: u64,
    pub events: Vec<Event>,
    pub sync_bytes: u64,
    pub sync_keys: u64,
    pub skipped_evicted: u64,
    pub snapshots_taken: u64,
    pub last_sparse_sync_step: u64,
    pub last_dense_sync_step: u64,
    pub max_sparse_lag: u64,
    pub max_dense_lag: u64,
}

fn sync_now<S: Scalar>(
    cluster: &Cluster<S>,
    include_dense: bool,
    state: &mut RunState,
) -> Result<()> {
    let stats = cluster.sync_all(include_dense, state.now)?;
    state.sync_bytes += stats.bytes;
    state.sync_keys += stats.keys;
    state.skipped_evicted += stats.skipped_evicted;
    state.last_sparse_sync_step = state.step;
    if include_dense {
        state.last_dense_sync_step = state.step;
    }
    state.events.push(Event::Synced {
        step: state.step,
        dense: include_dense,
    });
    Ok(())
}

fn post_step_hooks<S: Scalar>(
    cluster: &Cluster<S>,
    hooks: &RunHooks,
    state: &mut RunState,
) -> Result<()> {
    if let Some(schedule) = &hooks.schedule {
        state.max_sparse_lag = state.max_sparse_lag.max(state.step - state.last_sparse_sync_step);
        state.max_dense_lag = state.max_dense_lag.max(state.step - state.last_dense_sync_step);
        match schedule.should_sync(state.step) {
            SyncAction::None => {}
            SyncAction::SparseOnly => sync_now(cluster, false, state)?,
            SyncAction::SparseAndDense => sync_now(cluster, true, state)?,
        }
    }
    if let (Some(every), Some(dir)) = (hooks.snapshot_every, hooks.snapshot_dir.as_ref()) {
        if state.step % every == 0 {
            cluster.snapshot_all(dir, state.now)?;
            state.snapshots_taken += 1;
            state.events.push(Event::SnapshotTaken { step: state.step });
        }
    }
    if let Some(plan) = hooks.failure {
        if plan.at_step == state.step {
            let dir = hooks
                .snapshot_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("."));
            let outcome = cluster.inject_failure(ShardId(plan.shard), &dir)?;
            state.events.push(Event::FailureInjected {
                step: state.step,
                shard: plan.shard,
                restored: matches!(outcome, crate::ps::FailureOutcome::Restored { .. }),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainPhaseReport {
    pub steps: u64,
    pub examples: u64,
    pub mean_log_loss: f64,
    /// Mean loss per quarter of the pass, in order.
    pub quartile_log_loss: Vec<f64>,
}

/// One pass over `examples`: per mini-batch, look up (admitting new ids),
/// run forward/backward, and apply mean gradients to the training shards.
pub fn train_on<S: Scalar>(
    cluster: &Cluster<S>,
    model_cfg: &DeepFmConfig,
    scheme: SparseScheme,
    hyper: &TrainHyper,
    examples: &[Example],
    hooks: &RunHooks,
    state: &mut RunState,
) -> Result<TrainPhaseReport> {
    scheme.validate()?;
    let mut report = TrainPhaseReport::default();
    if examples.is_empty() {
        return Ok(report);
    }
    let mut quartile_losses = vec![(0.0f64, 0u64); 4];
    let total = examples.len();
    let flat_len = DenseParams::<S>::flat_len(model_cfg);
    for (batch_idx, batch) in examples.chunks(hyper.batch_size.max(1)).enumerate() {
        let dense = cluster.gather_dense(Role::Training)?;
        let mut sparse_grads: HashMap<(u16, u64), Vec<S>> = HashMap::new();
        let mut dense_grad = vec![S::zero(); flat_len];
        let mut batch_loss = 0.0f64;
        let scale = S::from_f64_lossy(1.0 / batch.len() as f64);

        for ex in batch {
            state.now = state.now.max(ex.ts);
            if ex.features.len() != model_cfg.num_slots {
                return Err(Error::contract(format!(
                    "example has {} slots, model expects {}",
                    ex.features.len(),
                    model_cfg.num_slots
                )));
            }
            // Gather (admitting) per slot; remember which components train.
            let mut slot_vectors = Vec::with_capacity(model_cfg.num_slots);
            let mut slot_linear = Vec::with_capacity(model_cfg.num_slots);
            let mut trainable: Vec<Vec<(u16, u16, u64)>> =
                Vec::with_capacity(model_cfg.num_slots);
            for key in &ex.features {
                let mut vector = vec![S::zero(); model_cfg.dim];
                let mut linear = S::zero();
                let mut active = Vec::new();
                for (emb_table, lin_table, id) in scheme.components(key.table_id, key.id) {
                    let shard = cluster.training(cluster.route(crate::types::FeatureKey::new(
                        emb_table, id,
                    )));
                    if let Some(v) = shard.lookup_or_admit(emb_table, id, ex.ts)? {
                        for d in 0..model_cfg.dim {
                            vector[d] += v[d];
                        }
                        let lin_shard = cluster.training(cluster.route(
                            crate::types::FeatureKey::new(lin_table, id),
                        ));
                        let w = lin_shard.lookup_or_insert_zero(lin_table, id, ex.ts)?;
                        linear += w[0];
                        active.push((emb_table, lin_table, id));
                    }
                }
                slot_vectors.push(vector);
                slot_linear.push(linear);
                trainable.push(active);
            }

            let fwd = model::forward(model_cfg, &slot_vectors, &slot_linear, &dense)?;
            batch_loss += metrics::log_loss(fwd.prediction.probability.to_f64_lossy(), ex.label);
            let grads = model::backward(model_cfg, &fwd, &slot_vectors, ex.label, &dense);

            for (slot, components) in trainable.iter().enumerate() {
                for &(emb_table, lin_table, id) in components {
                    let e = sparse_grads
                        .entry((emb_table, id))
                        .or_insert_with(|| vec![S::zero(); model_cfg.dim]);
                    for d in 0..model_cfg.dim {
                        e[d] += grads.embeddings[slot][d] * scale;
                    }
                    let l = sparse_grads
                        .entry((lin_table, id))
                        .or_insert_with(|| vec![S::zero(); 1]);
                    l[0] += grads.linear[slot] * scale;
                }
            }
            for (g, d) in dense_grad.iter_mut().zip(grads.flatten_dense()) {
                *g += d * scale;
            }
        }

        // Apply per shard in sorted key order for reproducible runs.
        let mut per_shard: BTreeMap<u32, Vec<SparseUpdate<S>>> = BTreeMap::new();
        let mut keys: Vec<(u16, u64)> = sparse_grads.keys().copied().collect();
        keys.sort_unstable();
        for (table_id, id) in keys {
            let grad = sparse_grads.remove(&(table_id, id)).unwrap();
            let shard = cluster.route(crate::types::FeatureKey::new(table_id, id));
            per_shard
                .entry(shard.0)
                .or_default()
                .push(SparseUpdate { table_id, id, grad });
        }
        let sparse_lr = S::from_f64_lossy(hyper.sparse_lr);
        let dense_lr = S::from_f64_lossy(hyper.dense_lr);
        for shard in cluster.training_shards() {
            let updates = per_shard.remove(&shard.id()).unwrap_or_default();
            let (offset, len) = shard.dense_range();
            shard.apply_update_batch(
                &updates,
                Some(&dense_grad[offset..offset + len]),
                sparse_lr,
                dense_lr,
                state.now,
            )?;
        }

        state.step += 1;
        state.examples_seen += batch.len() as u64;
        report.steps += 1;
        report.examples += batch.len() as u64;
        report.mean_log_loss += batch_loss;
        let quartile = (batch_idx * hyper.batch_size * 4 / total).min(3);
        quartile_losses[quartile].0 += batch_loss;
        quartile_losses[quartile].1 += batch.len() as u64;

        post_step_hooks(cluster, hooks, state)?;
    }
    report.mean_log_loss /= report.examples as f64;
    report.quartile_log_loss = quartile_losses
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .map(|(sum, n)| sum / n as f64)
        .collect();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub auc: f64,
    pub log_loss: f64,
    pub examples: u64,
}

/// Scores `examples` against one role's parameters (read-only; filtered
/// or unsynced ids contribute zero vectors).
pub fn evaluate<S: Scalar>(
    cluster: &Cluster<S>,
    model_cfg: &DeepFmConfig,
    scheme: SparseScheme,
    role: Role,
    examples: &[Example],
) -> Result<EvalMetrics> {
    scheme.validate()?;
    let dense = cluster.gather_dense(role)?;
    let mut scores = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    let mut loss = 0.0f64;
    for ex in examples {
        let mut slot_vectors = Vec::with_capacity(model_cfg.num_slots);
        let mut slot_linear = Vec::with_capacity(model_cfg.num_slots);
        for key in &ex.features {
            let mut vector = vec![S::zero(); model_cfg.dim];
            let mut linear = S::zero();
            for (emb_table, lin_table, id) in scheme.components(key.table_id, key.id) {
                let fk = crate::types::FeatureKey::new(emb_table, id);
                let shard = match role {
                    Role::Training => cluster.training(cluster.route(fk)),
                    Role::Serving => cluster.serving(cluster.route(fk)),
                };
                if let Some(v) = shard.lookup_vector(emb_table, id) {
                    for d in 0..model_cfg.dim {
                        vector[d] += v[d];
                    }
                }
                if let Some(w) = shard.lookup_vector(lin_table, id) {
                    linear += w[0];
                }
            }
            slot_vectors.push(vector);
            slot_linear.push(linear);
        }
        let fwd = model::forward(model_cfg, &slot_vectors, &slot_linear, &dense)?;
        let p = fwd.prediction.probability.to_f64_lossy();
        loss += metrics::log_loss(p, ex.label);
        scores.push(p);
        labels.push(ex.label);
    }
    Ok(EvalMetrics {
        auc: metrics::auc(&scores, &labels)?,
        log_loss: loss / examples.len().max(1) as f64,
        examples: examples.len() as u64,
    })
}

#[derive(Debug, Clone, Default)]
pub struct OnlineOptions {
    /// When false, serving freezes at the batch-trained parameters (the
    /// batch-baseline arm); training still continues.
    pub sync_disabled: bool,
    pub hooks: RunHooks,
}

#[derive(Debug, Clone)]
pub struct OnlineReport {
    pub per_shard_auc: Vec<f64>,
    pub per_shard_log_loss: Vec<f64>,
    /// Global step at which each shard was evaluated.
    pub eval_steps: Vec<u64>,
    pub rows: Vec<MetricsRow>,
    pub events: Vec<Event>,
    pub batch_report: TrainPhaseReport,
    pub sync_bytes: u64,
    pub sync_keys: u64,
    pub skipped_evicted: u64,
    pub max_sparse_lag: u64,
    pub max_dense_lag: u64,
    pub examples_seen: u64,
}

impl OnlineReport {
    pub fn mean_auc(&self) -> f64 {
        self.per_shard_auc.iter().sum::<f64>() / self.per_shard_auc.len().max(1) as f64
    }

    /// Mean AUC over shards evaluated strictly after `step`.
    pub fn mean_auc_after_step(&self, step: u64) -> f64 {
        let vals: Vec<f64> = self
            .per_shard_auc
            .iter()
            .zip(&self.eval_steps)
            .filter(|(_, &s)| s > step)
            .map(|(&a, _)| a)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

/// Simulated online training: one-pass batch training, then for each
/// chronological shard sync the serving model, evaluate it on the shard,
/// and train on the shard.
pub fn online_train_simulated<S: Scalar>(
    cluster: &Cluster<S>,
    model_cfg: &DeepFmConfig,
    scheme: SparseScheme,
    hyper: &TrainHyper,
    batch_data: &[Example],
    online_shards: &[Vec<Example>],
    opts: &OnlineOptions,
) -> Result<OnlineReport> {
    let mut state = RunState::default();
    let batch_report = train_on(
        cluster,
        model_cfg,
        scheme,
        hyper,
        batch_data,
        &opts.hooks,
        &mut state,
    )?;
    if opts.sync_disabled {
        // The serving side freezes at the batch-trained parameters.
        sync_now(cluster, true, &mut state)?;
    }

    let mut per_shard_auc = Vec::with_capacity(online_shards.len());
    let mut per_shard_log_loss = Vec::with_capacity(online_shards.len());
    let mut eval_steps = Vec::with_capacity(online_shards.len());
    let mut rows = Vec::with_capacity(online_shards.len());
    let mut bytes_at_last_row = 0u64;

    for (i, shard_data) in online_shards.iter().enumerate() {
        if !opts.sync_disabled {
            sync_now(cluster, true, &mut state)?;
        }
        state.events.push(Event::Evaluated {
            shard: i,
            step: state.step,
        });
        let eval = evaluate(cluster, model_cfg, scheme, Role::Serving, shard_data)?;
        per_shard_auc.push(eval.auc);
        per_shard_log_loss.push(eval.log_loss);
        eval_steps.push(state.step);

        train_on(
            cluster,
            model_cfg,
            scheme,
            hyper,
            shard_data,
            &opts.hooks,
            &mut state,
        )?;
        state.events.push(Event::TrainedShard {
            shard: i,
            step: state.step,
        });

        rows.push(MetricsRow {
            index: i as u64,
            auc: eval.auc,
            log_loss: eval.log_loss,
            examples_seen: state.examples_seen,
            packet_bytes: state.sync_bytes - bytes_at_last_row,
        });
        bytes_at_last_row = state.sync_bytes;
    }

    Ok(OnlineReport {
        per_shard_auc,
        per_shard_log_loss,
        eval_steps,
        rows,
        events: state.events,
        batch_report,
        sync_bytes: state.sync_bytes,
        sync_keys: state.sync_keys,
        skipped_evicted: state.skipped_evicted,
        max_sparse_lag: state.max_sparse_lag,
        max_dense_lag: state.max_dense_lag,
        examples_seen: state.examples_seen,
    })
}

/// Splits a chronological stream into the batch-phase prefix and `n`
/// online shards covering the rest.
pub fn split_batch_online(
    examples: Vec<Example>,
    batch_fraction: f64,
    n: usize,
) -> Result<(Vec<Example>, Vec<Vec<Example>>)> {
    if !(0.0..1.0).contains(&batch_fraction) {
        return Err(Error::contract(format!(
            "batch_fraction must be in [0, 1), got {batch_fraction}"
        )));
    }
    let mut batch = examples;
    let cut = (batch.len() as f64 * batch_fraction).round() as usize;
    let online = batch.split_off(cut.min(batch.len()));
    let shards = crate::datasets::split_shards(online, n)?;
    Ok((batch, shards))
}
