//! Experiment drivers: the collision A/B comparison, paired-seed
//! reliability runs, and the sync-interval sweep helper.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::{hash_collision_stats, remainder_reducer, CollisionStats};
use crate::error::Result;
use crate::model::DeepFmConfig;
use crate::ps::{Cluster, Role};
use crate::scalar::Scalar;
use crate::trainer::{
    build_table_configs, evaluate, online_train_simulated, train_on, FailurePlan, OnlineOptions,
    OnlineReport, RunHooks, RunState, SparseScheme, TableTemplate, TrainHyper,
};
use crate::types::Example;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionReport {
    /// Test AUC after each epoch, collisionless arm.
    pub collisionless_auc: Vec<f64>,
    /// Test AUC after each epoch, decomposed-table arm.
    pub decomposed_auc: Vec<f64>,
    pub collisionless_log_loss: Vec<f64>,
    pub decomposed_log_loss: Vec<f64>,
    /// Remainder-component sharing among distinct user ids.
    pub user_collision: CollisionStats,
    pub movie_collision: CollisionStats,
}

/// Trains two arms from the same seed that differ only in the sparse
/// representation (collisionless vs quotient/remainder decomposition) and
/// reports per-epoch test AUC for both.
pub fn collision_experiment<S: Scalar>(
    train: &[Example],
    test: &[Example],
    model_cfg: &DeepFmConfig,
    hyper: &TrainHyper,
    template: &TableTemplate,
    epochs: usize,
    modulus: u64,
    num_shards: u32,
    seed: u64,
) -> Result<CollisionReport> {
    let mut per_arm = Vec::new();
    for scheme in [
        SparseScheme::Collisionless,
        SparseScheme::Decomposed { modulus },
    ] {
        let cfgs = build_table_configs(model_cfg, scheme, template, seed);
        let cluster: Cluster<S> = Cluster::new(num_shards, cfgs, model_cfg.clone(), seed)?;
        let hooks = RunHooks::default();
        let mut state = RunState::default();
        let mut epoch_auc = Vec::with_capacity(epochs);
        let mut epoch_loss = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            train_on(&cluster, model_cfg, scheme, hyper, train, &hooks, &mut state)?;
            let eval = evaluate(&cluster, model_cfg, scheme, Role::Training, test)?;
            epoch_auc.push(eval.auc);
            epoch_loss.push(eval.log_loss);
        }
        per_arm.push((epoch_auc, epoch_loss));
    }

    let slot_ids = |slot: u16| -> Vec<u64> {
        train
            .iter()
            .flat_map(|e| e.features.iter())
            .filter(|f| f.table_id == slot)
            .map(|f| f.id)
            .collect()
    };
    let (decomposed_auc, decomposed_log_loss) = per_arm.pop().expect("two arms");
    let (collisionless_auc, collisionless_log_loss) = per_arm.pop().expect("two arms");
    Ok(CollisionReport {
        collisionless_auc,
        decomposed_auc,
        collisionless_log_loss,
        decomposed_log_loss,
        user_collision: hash_collision_stats(&slot_ids(0), remainder_reducer(modulus)),
        movie_collision: hash_collision_stats(&slot_ids(1), remainder_reducer(modulus)),
    })
}

#[derive(Debug, Clone)]
pub struct ReliabilityReport {
    pub baseline: OnlineReport,
    pub failure: OnlineReport,
    pub restored: bool,
    pub baseline_mean_auc: f64,
    pub failure_mean_auc: f64,
    /// Mean AUC over shards evaluated after the failure step.
    pub post_failure_baseline_auc: f64,
    pub post_failure_failure_auc: f64,
    /// Post-failure baseline minus post-failure failure AUC.
    pub degradation: f64,
}

/// Paired runs from one seed: identical in everything except a single
/// injected shard failure (restored from its latest snapshot).
#[allow(clippy::too_many_arguments)]
pub fn reliability_experiment<S: Scalar>(
    model_cfg: &DeepFmConfig,
    scheme: SparseScheme,
    hyper: &TrainHyper,
    template: &TableTemplate,
    num_shards: u32,
    seed: u64,
    batch: &[Example],
    shards: &[Vec<Example>],
    snapshot_every: u64,
    failure: FailurePlan,
    baseline_dir: &Path,
    failure_dir: &Path,
) -> Result<ReliabilityReport> {
    let run = |snapshot_dir: &Path, plan: Option<FailurePlan>| -> Result<OnlineReport> {
        let cfgs = build_table_configs(model_cfg, scheme, template, seed);
        let cluster: Cluster<S> = Cluster::new(num_shards, cfgs, model_cfg.clone(), seed)?;
        let opts = OnlineOptions {
            sync_disabled: false,
            hooks: RunHooks {
                snapshot_every: Some(snapshot_every),
                snapshot_dir: Some(snapshot_dir.to_path_buf()),
                failure: plan,
                schedule: None,
            },
        };
        online_train_simulated(&cluster, model_cfg, scheme, hyper, batch, shards, &opts)
    };

    let baseline = run(baseline_dir, None)?;
    let failed = run(failure_dir, Some(failure))?;
    let restored = failed.events.iter().any(|e| {
        matches!(
            e,
            crate::trainer::Event::FailureInjected { restored: true, .. }
        )
    });
    let post_base = baseline.mean_auc_after_step(failure.at_step);
    let post_fail = failed.mean_auc_after_step(failure.at_step);
    Ok(ReliabilityReport {
        baseline_mean_auc: baseline.mean_auc(),
        failure_mean_auc: failed.mean_auc(),
        post_failure_baseline_auc: post_base,
        post_failure_failure_auc: post_fail,
        degradation: post_base - post_fail,
        restored,
        baseline,
        failure: failed,
    })
}
