//! Subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rtrec_core::config::{DatasetSpec, RunConfig};
use rtrec_core::datasets::{hash_collision_stats, hashed_reducer};
use rtrec_core::hashing::derive_seed;
use rtrec_core::joiner::textio::{self, Record};
use rtrec_core::joiner::{negative_sample, Joiner};
use rtrec_core::model::DeepFmConfig;
use rtrec_core::ps::Cluster;
use rtrec_core::sync::{
    estimate_packet_bytes, estimate_packet_bytes_exact, SyncSchedule,
};
use rtrec_core::trainer::experiments::{collision_experiment, reliability_experiment};
use rtrec_core::trainer::metrics_io::{write_json, write_metrics_csv, MetricsRow};
use rtrec_core::trainer::{
    build_table_configs, online_train_simulated, split_batch_online, FailurePlan, OnlineOptions,
    OnlineReport, RunHooks, SparseScheme,
};
use rtrec_core::Real;

use crate::{RunArgs, StatsArgs, SyncBenchArgs};

/// Loads the config and applies command-line overrides.
fn load_config(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.seeds = vec![seed];
    }
    if let Some(shards) = args.shards {
        cfg.num_shards = shards;
    }
    if let Some(sparse) = args.sync_interval {
        cfg.sync_schedule = if sparse == 0 {
            None
        } else {
            let dense = args
                .dense_interval
                .or(cfg.sync_schedule.map(|s| s.dense_interval))
                .filter(|&d| d >= sparse && d % sparse == 0)
                .unwrap_or(sparse);
            Some(SyncSchedule::new(sparse, dense)?)
        };
    } else if let Some(dense) = args.dense_interval {
        let sparse = cfg.sync_schedule.map(|s| s.sparse_interval).unwrap_or(dense);
        cfg.sync_schedule = Some(SyncSchedule::new(sparse, dense)?);
    }
    if let Some(every) = args.snapshot_every {
        cfg.snapshot_every = (every > 0).then_some(every);
    }
    match (args.fail_shard, args.fail_at) {
        (Some(shard), Some(at_step)) => cfg.failure = Some(FailurePlan { shard, at_step }),
        (Some(shard), None) => {
            if let Some(plan) = &mut cfg.failure {
                plan.shard = shard;
            } else {
                bail!(rtrec_core::Error::config(
                    "--fail-shard needs --fail-at or a [failure] section"
                ));
            }
        }
        (None, Some(at_step)) => {
            if let Some(plan) = &mut cfg.failure {
                plan.at_step = at_step;
            } else {
                bail!(rtrec_core::Error::config(
                    "--fail-at needs --fail-shard or a [failure] section"
                ));
            }
        }
        (None, None) => {}
    }
    cfg.validate()?;
    Ok((cfg, base))
}

fn ensure_out(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}

fn note(verbose: u8, msg: impl AsRef<str>) {
    if verbose > 0 {
        eprintln!("[rtrec] {}", msg.as_ref());
    }
}

fn run_online(cfg: &RunConfig, base: &Path, out: &Path, seed: u64) -> Result<OnlineReport> {
    let examples = cfg.load_examples(base, seed)?;
    let (batch, shards) = split_batch_online(examples, cfg.batch_fraction, cfg.online_shards)?;
    let scheme = SparseScheme::Collisionless;
    let tables = build_table_configs(&cfg.model, scheme, &cfg.table, seed);
    let cluster: Cluster<Real> = Cluster::new(cfg.num_shards, tables, cfg.model.clone(), seed)?;
    let opts = OnlineOptions {
        sync_disabled: false,
        hooks: RunHooks {
            snapshot_every: cfg.snapshot_every,
            snapshot_dir: Some(out.join("snapshots")),
            failure: cfg.failure,
            schedule: cfg.sync_schedule,
        },
    };
    let report = online_train_simulated(
        &cluster,
        &cfg.model,
        scheme,
        &cfg.hyper,
        &batch,
        &shards,
        &opts,
    )?;
    write_json(
        &out.join("counters.json"),
        &serde_json::json!({
            "tables": cluster.training_stats(),
            "sync_keys": report.sync_keys,
            "sync_bytes": report.sync_bytes,
            "skipped_evicted": report.skipped_evicted,
            "examples_seen": report.examples_seen,
        }),
    )?;
    Ok(report)
}

pub fn online_exp(args: &RunArgs, verbose: u8) -> Result<()> {
    let started = Instant::now();
    let (cfg, base) = load_config(args)?;
    ensure_out(&args.out)?;
    note(verbose, format!("online-exp seed {} N {}", cfg.seed, cfg.online_shards));
    let report = run_online(&cfg, &base, &args.out, cfg.seed)?;
    write_metrics_csv(&args.out.join("metrics.csv"), &report.rows)?;
    write_json(
        &args.out.join("summary.json"),
        &serde_json::json!({
            "experiment": "online-exp",
            "seed": cfg.seed,
            "online_shards": cfg.online_shards,
            "num_shards": cfg.num_shards,
            "mean_online_auc": report.mean_auc(),
            "per_shard_auc": report.per_shard_auc,
            "batch_mean_log_loss": report.batch_report.mean_log_loss,
            "sync_bytes": report.sync_bytes,
            "sync_keys": report.sync_keys,
            "max_sparse_lag_steps": report.max_sparse_lag,
            "max_dense_lag_steps": report.max_dense_lag,
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    note(verbose, format!("mean online AUC {:.4}", report.mean_auc()));
    Ok(())
}

pub fn collision_exp(args: &RunArgs, verbose: u8) -> Result<()> {
    let started = Instant::now();
    let (cfg, base) = load_config(args)?;
    ensure_out(&args.out)?;
    let examples = cfg.load_examples(&base, cfg.seed)?;
    let cut = ((examples.len() as f64) * (1.0 - cfg.test_fraction)).round() as usize;
    let (train, test) = examples.split_at(cut.min(examples.len()));
    note(
        verbose,
        format!(
            "collision-exp: {} train / {} test, modulus {}",
            train.len(),
            test.len(),
            cfg.modulus
        ),
    );
    let report = collision_experiment::<Real>(
        train,
        test,
        &cfg.model,
        &cfg.hyper,
        &cfg.table,
        cfg.epochs,
        cfg.modulus,
        cfg.num_shards,
        cfg.seed,
    )?;

    let rows = |aucs: &[f64], losses: &[f64]| -> Vec<MetricsRow> {
        aucs.iter()
            .zip(losses)
            .enumerate()
            .map(|(epoch, (&auc, &log_loss))| MetricsRow {
                index: epoch as u64,
                auc,
                log_loss,
                examples_seen: ((epoch + 1) * train.len()) as u64,
                packet_bytes: 0,
            })
            .collect()
    };
    write_metrics_csv(
        &args.out.join("metrics.csv"),
        &rows(&report.collisionless_auc, &report.collisionless_log_loss),
    )?;
    write_metrics_csv(
        &args.out.join("metrics_hashed.csv"),
        &rows(&report.decomposed_auc, &report.decomposed_log_loss),
    )?;
    let final_gap = report.collisionless_auc.last().unwrap_or(&0.0)
        - report.decomposed_auc.last().unwrap_or(&0.0);
    write_json(
        &args.out.join("summary.json"),
        &serde_json::json!({
            "experiment": "collision-exp",
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "modulus": cfg.modulus,
            "collisionless_auc": report.collisionless_auc,
            "hashed_auc": report.decomposed_auc,
            "final_auc_gap": final_gap,
            "user_collision": report.user_collision,
            "movie_collision": report.movie_collision,
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    write_json(
        &args.out.join("counters.json"),
        &serde_json::json!({
            "train_examples": train.len(),
            "test_examples": test.len(),
        }),
    )?;
    note(verbose, format!("final AUC gap {final_gap:.4}"));
    Ok(())
}

pub fn reliability_exp(args: &RunArgs, verbose: u8) -> Result<()> {
    let started = Instant::now();
    let (cfg, base) = load_config(args)?;
    ensure_out(&args.out)?;
    let failure = cfg.failure.ok_or_else(|| {
        rtrec_core::Error::config("reliability-exp needs [failure] (or --fail-shard/--fail-at)")
    })?;
    let snapshot_every = cfg.snapshot_every.ok_or_else(|| {
        rtrec_core::Error::config(
            "reliability-exp needs [snapshot].every_steps (or --snapshot-every)",
        )
    })?;
    if failure.shard >= cfg.num_shards {
        bail!(rtrec_core::Error::config(format!(
            "failure.shard {} out of range ({} shards)",
            failure.shard, cfg.num_shards
        )));
    }
    let examples = cfg.load_examples(&base, cfg.seed)?;
    let (batch, shards) = split_batch_online(examples, cfg.batch_fraction, cfg.online_shards)?;
    note(
        verbose,
        format!(
            "reliability-exp: failing shard {} at step {}",
            failure.shard, failure.at_step
        ),
    );
    let report = reliability_experiment::<Real>(
        &cfg.model,
        SparseScheme::Collisionless,
        &cfg.hyper,
        &cfg.table,
        cfg.num_shards,
        cfg.seed,
        &batch,
        &shards,
        snapshot_every,
        failure,
        &args.out.join("snapshots_baseline"),
        &args.out.join("snapshots_failure"),
    )?;
    write_metrics_csv(&args.out.join("metrics.csv"), &report.baseline.rows)?;
    write_metrics_csv(&args.out.join("metrics_failure.csv"), &report.failure.rows)?;
    write_json(
        &args.out.join("summary.json"),
        &serde_json::json!({
            "experiment": "reliability-exp",
            "seed": cfg.seed,
            "failure": failure,
            "snapshot_every_steps": snapshot_every,
            "restored_from_snapshot": report.restored,
            "baseline_mean_auc": report.baseline_mean_auc,
            "failure_mean_auc": report.failure_mean_auc,
            "post_failure_baseline_auc": report.post_failure_baseline_auc,
            "post_failure_failure_auc": report.post_failure_failure_auc,
            "degradation": report.degradation,
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    write_json(
        &args.out.join("counters.json"),
        &serde_json::json!({
            "baseline_sync_keys": report.baseline.sync_keys,
            "failure_sync_keys": report.failure.sync_keys,
            "baseline_sync_bytes": report.baseline.sync_bytes,
            "failure_sync_bytes": report.failure.sync_bytes,
        }),
    )?;
    note(verbose, format!("degradation {:.5}", report.degradation));
    Ok(())
}

pub fn sync_bench(args: &SyncBenchArgs) -> Result<()> {
    let started = Instant::now();
    ensure_out(&args.out)?;
    let mut grid = Vec::new();
    for keys in [1_000u64, 10_000, 100_000] {
        for dim in [16u64, 64, 256, 1_024] {
            grid.push(serde_json::json!({
                "keys": keys,
                "dim": dim,
                "payload_bytes": estimate_packet_bytes(keys, dim, 4),
                "exact_bytes": estimate_packet_bytes_exact(keys, dim, 4),
            }));
        }
    }

    // Micro-benchmark: build, encode, decode, and apply one real packet.
    let model = DeepFmConfig::new(1, 16, vec![]);
    let tables = build_table_configs(
        &model,
        SparseScheme::Collisionless,
        &rtrec_core::trainer::TableTemplate {
            initial_capacity: 65_536,
            ..Default::default()
        },
        7,
    );
    let cluster: Cluster<Real> = Cluster::new(1, tables, model, 7)?;
    let shard = cluster.training_shards()[0].clone();
    let bench_keys = 10_000u64;
    for id in 0..bench_keys {
        shard.lookup_or_admit(0, id, 0)?;
    }
    let updates: Vec<rtrec_core::ps::SparseUpdate<Real>> = (0..bench_keys)
        .map(|id| rtrec_core::ps::SparseUpdate {
            table_id: 0,
            id,
            grad: vec![0.01; 16],
        })
        .collect();
    shard.apply_update_batch(&updates, None, 0.05, 0.001, 1)?;
    let t0 = Instant::now();
    let stats = cluster.sync_all(true, 1)?;
    let sync_elapsed = t0.elapsed();

    let headline = estimate_packet_bytes(args.keys, args.dim, 4);
    write_json(
        &args.out.join("summary.json"),
        &serde_json::json!({
            "experiment": "sync-bench",
            "headline": {
                "keys": args.keys,
                "dim": args.dim,
                "bytes_per_element": 4,
                "payload_bytes": headline,
                "payload_mb": headline as f64 / 1e6,
            },
            "grid": grid,
            "microbench": {
                "keys": bench_keys,
                "dim": 16,
                "wire_bytes": stats.bytes,
                "synced_keys": stats.keys,
                "encode_apply_s": sync_elapsed.as_secs_f64(),
            },
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    println!(
        "{} keys x dim {} x 4 B = {} bytes ({:.1} MB)",
        args.keys,
        args.dim,
        headline,
        headline as f64 / 1e6
    );
    Ok(())
}

pub fn joiner_sim(args: &RunArgs, verbose: u8) -> Result<()> {
    let started = Instant::now();
    let (cfg, base) = load_config(args)?;
    ensure_out(&args.out)?;
    let DatasetSpec::Examples { path } = &cfg.dataset else {
        bail!(rtrec_core::Error::config(
            "joiner-sim needs dataset.kind = examples with the input stream path"
        ));
    };
    let path = if path.is_absolute() {
        path.clone()
    } else {
        base.join(path)
    };
    if !path.is_file() {
        bail!(rtrec_core::Error::MissingData(path));
    }
    let records = textio::read_records(BufReader::new(fs::File::open(&path)?))?;
    note(verbose, format!("joiner-sim: {} records", records.len()));

    let mut joiner = Joiner::new(cfg.joiner.clone(), &args.out.join("spill.log"))?;
    let mut rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "negative-sampling"));
    let mut emitted = Vec::new();
    let mut sampled_out = 0u64;
    let mut watermark = i64::MIN;
    let mut keep = |ex: rtrec_core::Example,
                    emitted: &mut Vec<rtrec_core::Example>,
                    sampled_out: &mut u64|
     -> Result<()> {
        match negative_sample(ex, cfg.joiner.negative_rate, &mut rng)? {
            Some(kept) => emitted.push(kept),
            None => *sampled_out += 1,
        }
        Ok(())
    };
    for (idx, record) in records.into_iter().enumerate() {
        match record {
            Record::Feature(f) => {
                watermark = watermark.max(f.ts);
                if let Some(ex) = joiner.ingest_feature(f)? {
                    keep(ex, &mut emitted, &mut sampled_out)?;
                }
            }
            Record::Action(a) => {
                watermark = watermark.max(a.ts);
                if let Some(ex) = joiner.ingest_action(a, a.ts)? {
                    keep(ex, &mut emitted, &mut sampled_out)?;
                }
            }
            Record::Example(_) => {
                // Already-joined rows pass through untouched.
            }
        }
        if idx % 1024 == 1023 {
            for ex in joiner.flush_expired(watermark)? {
                keep(ex, &mut emitted, &mut sampled_out)?;
            }
        }
    }
    // Final flush: everything still pending is past every window.
    let final_now = watermark.saturating_add(cfg.joiner.disk_ttl + 1);
    for ex in joiner.flush_expired(final_now)? {
        keep(ex, &mut emitted, &mut sampled_out)?;
    }
    emitted.sort_by_key(|e| e.ts);

    let out_file = fs::File::create(args.out.join("examples.txt"))?;
    textio::write_examples(std::io::BufWriter::new(out_file), &emitted)?;
    let counters = joiner.counters();
    write_json(
        &args.out.join("counters.json"),
        &serde_json::json!({
            "joiner": counters,
            "emitted_examples": emitted.len(),
            "negatives_sampled_out": sampled_out,
        }),
    )?;
    write_json(
        &args.out.join("summary.json"),
        &serde_json::json!({
            "experiment": "joiner-sim",
            "seed": cfg.seed,
            "emitted_examples": emitted.len(),
            "joined": counters.joined,
            "joined_via_disk": counters.joined_via_disk,
            "action_misses": counters.action_misses,
            "negative_rate": cfg.joiner.negative_rate,
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    note(verbose, format!("emitted {} examples", emitted.len()));
    Ok(())
}

pub fn collision_stats(args: &StatsArgs) -> Result<()> {
    if args.space == 0 {
        bail!(rtrec_core::Error::config("--space must be >= 1"));
    }
    if !args.ids.is_file() {
        bail!(rtrec_core::Error::MissingData(args.ids.clone()));
    }
    let text = fs::read_to_string(&args.ids)?;
    let mut ids = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id = line.parse::<u64>().map_err(|e| rtrec_core::Error::Parse {
            line: idx + 1,
            msg: format!("bad id `{line}`: {e}"),
        })?;
        ids.push(id);
    }
    let stats = hash_collision_stats(&ids, hashed_reducer(args.space));
    println!(
        "before={} after={} rate={:.2}%",
        stats.count_before,
        stats.count_after,
        stats.collision_rate * 100.0
    );
    if let Some(out) = &args.out {
        ensure_out(out)?;
        write_json(
            &out.join("summary.json"),
            &serde_json::json!({
                "experiment": "collision-stats",
                "space": args.space,
                "count_before": stats.count_before,
                "count_after": stats.count_after,
                "collision_rate": stats.collision_rate,
            }),
        )?;
    }
    Ok(())
}
