//! Flat key=value run configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [dataset]
//! kind = synthetic-drift
//! num_examples = 70000
//!
//! [training]
//! seed = 42
//! online_shards = 10
//! ```
//!
//! Unknown sections or keys are errors; every diagnostic names the
//! offending `section.key`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::datasets::{DriftConfig, SyntheticRatingsConfig};
use crate::error::{Error, Result};
use crate::joiner::{JoinerConfig, TimeoutPolicy};
use crate::model::DeepFmConfig;
use crate::sync::SyncSchedule;
use crate::trainer::{FailurePlan, TableTemplate, TrainHyper};
use crate::types::Example;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DatasetSpec {
    Movielens {
        path: PathBuf,
        /// Deterministic user subsample: keep `num` of every `den` buckets.
        user_keep: Option<(u64, u64)>,
        max_rows: Option<usize>,
    },
    Criteo {
        path: PathBuf,
        max_rows: Option<usize>,
    },
    SyntheticDrift(DriftConfig),
    SyntheticRatings(SyntheticRatingsConfig),
    /// Joiner-format `E` records, or the raw `F`/`A` stream for joiner-sim.
    Examples { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: DeepFmConfig,
    pub table: TableTemplate,
    pub hyper: TrainHyper,
    pub seed: u64,
    /// Seeds for multi-seed experiments; defaults to `[seed]`.
    pub seeds: Vec<u64>,
    pub num_shards: u32,
    /// Online shard count N for the simulated online loop.
    pub online_shards: usize,
    /// Fraction of the stream that belongs to the batch phase.
    pub batch_fraction: f64,
    /// Epochs for the collision experiment.
    pub epochs: usize,
    /// Decomposition modulus for the hashed baseline arm.
    pub modulus: u64,
    /// Chronological tail held out as the collision test split.
    pub test_fraction: f64,
    pub sync_schedule: Option<SyncSchedule>,
    pub snapshot_every: Option<u64>,
    pub failure: Option<FailurePlan>,
    pub joiner: JoinerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::SyntheticDrift(default_drift()),
            model: DeepFmConfig::new(2, 8, vec![64, 32, 1]),
            table: TableTemplate::default(),
            hyper: TrainHyper::default(),
            seed: 42,
            seeds: vec![],
            num_shards: 8,
            online_shards: 10,
            batch_fraction: 5.0 / 7.0,
            epochs: 4,
            modulus: 1 << 15,
            test_fraction: 0.2,
            sync_schedule: None,
            snapshot_every: None,
            failure: None,
            joiner: JoinerConfig::new(60, 3_600),
        }
    }
}

fn default_drift() -> DriftConfig {
    DriftConfig {
        num_ids: 2_000,
        zipf_exponent: 1.1,
        drift_period: 8_000,
        base_ctr: 0.4,
        drift_amplitude: 0.25,
        id_bias_scale: 0.15,
        num_examples: 70_000,
        seed: 42,
    }
}

struct RawItem {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn tokenize(text: &str) -> Result<Vec<RawItem>> {
    let mut items = Vec::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.split('#').next().unwrap_or("").trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(Error::Parse {
                line,
                msg: format!("unterminated section header `{trimmed}`"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(Error::Parse {
            line,
            msg: format!("expected key = value, got `{trimmed}`"),
        })?;
        if section.is_empty() {
            return Err(Error::Parse {
                line,
                msg: format!("key `{}` appears before any [section]", key.trim()),
            });
        }
        items.push(RawItem {
            section: section.clone(),
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(items)
}

fn field_err(item: &RawItem, what: &str) -> Error {
    Error::config(format!(
        "{}.{} (line {}): {what}, got `{}`",
        item.section, item.key, item.line, item.value
    ))
}

fn parse_num<T: std::str::FromStr>(item: &RawItem, what: &str) -> Result<T> {
    item.value.parse().map_err(|_| field_err(item, what))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let items = tokenize(text)?;
        let mut cfg = RunConfig::default();

        // Dataset assembles from its own staging area because `kind`
        // decides which keys are meaningful.
        let mut ds_kind: Option<String> = None;
        let mut ds_path: Option<PathBuf> = None;
        let mut ds_max_rows: Option<usize> = None;
        let mut ds_user_keep: Option<(u64, u64)> = None;
        let mut drift = default_drift();
        let mut ratings = SyntheticRatingsConfig::default();
        let mut sparse_interval = 0u64;
        let mut dense_interval = 0u64;
        let mut snapshot_every = 0u64;
        let mut fail_shard = -1i64;
        let mut fail_at = 0u64;

        for item in &items {
            match (item.section.as_str(), item.key.as_str()) {
                ("dataset", "kind") => ds_kind = Some(item.value.clone()),
                ("dataset", "path") => ds_path = Some(PathBuf::from(&item.value)),
                ("dataset", "max_rows") => {
                    ds_max_rows = Some(parse_num(item, "expected a row count")?)
                }
                ("dataset", "user_keep") => {
                    let (num, den) = item.value.split_once('/').ok_or_else(|| {
                        field_err(item, "expected num/den (e.g. 1/8)")
                    })?;
                    let num = num.trim().parse().map_err(|_| field_err(item, "bad numerator"))?;
                    let den = den.trim().parse().map_err(|_| field_err(item, "bad denominator"))?;
                    ds_user_keep = Some((num, den));
                }
                ("dataset", "num_ids") => drift.num_ids = parse_num(item, "expected an id count")?,
                ("dataset", "zipf_exponent") => {
                    drift.zipf_exponent = parse_num(item, "expected a positive real")?
                }
                ("dataset", "drift_period") => {
                    drift.drift_period = parse_num(item, "expected steps")?
                }
                ("dataset", "base_ctr") => drift.base_ctr = parse_num(item, "expected a rate")?,
                ("dataset", "drift_amplitude") => {
                    drift.drift_amplitude = parse_num(item, "expected a rate")?
                }
                ("dataset", "id_bias_scale") => {
                    drift.id_bias_scale = parse_num(item, "expected a scale")?
                }
                ("dataset", "num_examples") => {
                    drift.num_examples = parse_num(item, "expected a count")?
                }
                ("dataset", "num_users") => ratings.num_users = parse_num(item, "expected a count")?,
                ("dataset", "num_movies") => {
                    ratings.num_movies = parse_num(item, "expected a count")?
                }
                ("dataset", "num_ratings") => {
                    ratings.num_ratings = parse_num(item, "expected a count")?
                }
                ("dataset", "latent_dim") => {
                    ratings.latent_dim = parse_num(item, "expected a dimension")?
                }
                ("model", "num_slots") => cfg.model.num_slots = parse_num(item, "expected a count")?,
                ("model", "dim") => cfg.model.dim = parse_num(item, "expected a width")?,
                ("model", "mlp") => {
                    cfg.model.mlp_layers = item
                        .value
                        .split(',')
                        .map(|w| w.trim().parse().map_err(|_| field_err(item, "bad width")))
                        .collect::<Result<Vec<usize>>>()?;
                }
                ("tables", "admit_threshold") => {
                    cfg.table.admit_threshold = parse_num(item, "expected occurrences")?
                }
                ("tables", "admit_probability") => {
                    cfg.table.admit_probability = parse_num(item, "expected a probability")?
                }
                ("tables", "ttl") => cfg.table.ttl = parse_num(item, "expected seconds")?,
                ("tables", "initial_capacity") => {
                    cfg.table.initial_capacity = parse_num(item, "expected a power of two")?
                }
                ("tables", "exact_counting") => {
                    cfg.table.exact_counting = parse_num(item, "expected true/false")?
                }
                ("training", "seed") => cfg.seed = parse_num(item, "expected a seed")?,
                ("training", "seeds") => {
                    cfg.seeds = item
                        .value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| field_err(item, "bad seed")))
                        .collect::<Result<Vec<u64>>>()?;
                }
                ("training", "batch_size") => {
                    cfg.hyper.batch_size = parse_num(item, "expected a batch size")?
                }
                ("training", "sparse_lr") => {
                    cfg.hyper.sparse_lr = parse_num(item, "expected a learning rate")?
                }
                ("training", "dense_lr") => {
                    cfg.hyper.dense_lr = parse_num(item, "expected a learning rate")?
                }
                ("training", "num_shards") => {
                    cfg.num_shards = parse_num(item, "expected a shard count")?
                }
                ("training", "online_shards") => {
                    cfg.online_shards = parse_num(item, "expected a shard count")?
                }
                ("training", "batch_fraction") => {
                    cfg.batch_fraction = parse_num(item, "expected a fraction")?
                }
                ("training", "epochs") => cfg.epochs = parse_num(item, "expected epochs")?,
                ("training", "modulus") => cfg.modulus = parse_num(item, "expected a modulus")?,
                ("training", "test_fraction") => {
                    cfg.test_fraction = parse_num(item, "expected a fraction")?
                }
                ("sync", "sparse_interval") => {
                    sparse_interval = parse_num(item, "expected steps")?
                }
                ("sync", "dense_interval") => dense_interval = parse_num(item, "expected steps")?,
                ("snapshot", "every_steps") => {
                    snapshot_every = parse_num(item, "expected steps")?
                }
                ("failure", "shard") => fail_shard = parse_num(item, "expected a shard index")?,
                ("failure", "at_step") => fail_at = parse_num(item, "expected a step")?,
                ("joiner", "memory_window") => {
                    cfg.joiner.memory_window = parse_num(item, "expected seconds")?
                }
                ("joiner", "disk_ttl") => cfg.joiner.disk_ttl = parse_num(item, "expected seconds")?,
                ("joiner", "action_wait") => {
                    cfg.joiner.action_wait = parse_num(item, "expected seconds")?
                }
                ("joiner", "negative_rate") => {
                    cfg.joiner.negative_rate = parse_num(item, "expected a rate")?
                }
                ("joiner", "timeout_policy") => {
                    cfg.joiner.timeout_policy = match item.value.as_str() {
                        "drop" => TimeoutPolicy::Drop,
                        "emit-negative" => TimeoutPolicy::EmitNegative,
                        _ => return Err(field_err(item, "expected drop or emit-negative")),
                    }
                }
                _ => {
                    return Err(Error::config(format!(
                        "unknown key {}.{} (line {})",
                        item.section, item.key, item.line
                    )))
                }
            }
        }

        let kind = ds_kind
            .ok_or_else(|| Error::config("dataset.kind is required".to_string()))?;
        let need_path = |p: &Option<PathBuf>| {
            p.clone()
                .ok_or_else(|| Error::config(format!("dataset.path is required for kind {kind}")))
        };
        cfg.dataset = match kind.as_str() {
            "movielens" => DatasetSpec::Movielens {
                path: need_path(&ds_path)?,
                user_keep: ds_user_keep,
                max_rows: ds_max_rows,
            },
            "criteo" => DatasetSpec::Criteo {
                path: need_path(&ds_path)?,
                max_rows: ds_max_rows,
            },
            "synthetic-drift" => {
                drift.seed = cfg.seed;
                DatasetSpec::SyntheticDrift(drift)
            }
            "synthetic-ratings" => {
                ratings.seed = cfg.seed;
                DatasetSpec::SyntheticRatings(ratings)
            }
            "examples" => DatasetSpec::Examples {
                path: need_path(&ds_path)?,
            },
            other => {
                return Err(Error::config(format!(
                    "dataset.kind: unknown kind `{other}`"
                )))
            }
        };
        if sparse_interval > 0 {
            let dense = if dense_interval > 0 {
                dense_interval
            } else {
                sparse_interval
            };
            cfg.sync_schedule = Some(SyncSchedule::new(sparse_interval, dense)?);
        }
        if snapshot_every > 0 {
            cfg.snapshot_every = Some(snapshot_every);
        }
        if fail_shard >= 0 {
            cfg.failure = Some(FailurePlan {
                shard: fail_shard as u32,
                at_step: fail_at,
            });
        }
        if cfg.seeds.is_empty() {
            cfg.seeds = vec![cfg.seed];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.joiner.validate()?;
        if !(0.0..1.0).contains(&self.batch_fraction) {
            return Err(Error::config(format!(
                "training.batch_fraction must be in [0, 1), got {}",
                self.batch_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config(format!(
                "training.test_fraction must be in [0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.num_shards == 0 {
            return Err(Error::config("training.num_shards must be >= 1"));
        }
        if self.online_shards == 0 {
            return Err(Error::config("training.online_shards must be >= 1"));
        }
        if self.modulus == 0 || !self.modulus.is_power_of_two() {
            return Err(Error::config(format!(
                "training.modulus must be a power of two, got {}",
                self.modulus
            )));
        }
        if let DatasetSpec::SyntheticDrift(d) = &self.dataset {
            d.validate()?;
        }
        Ok(())
    }

    /// Materializes the labeled example stream, applying a seed override
    /// to synthetic generators. `base` anchors relative dataset paths.
    pub fn load_examples(&self, base: &Path, seed: u64) -> Result<Vec<Example>> {
        match &self.dataset {
            DatasetSpec::Movielens {
                path,
                user_keep,
                max_rows,
            } => {
                let path = resolve(base, path);
                let (mut examples, _) = crate::datasets::load_movielens(&path)?;
                if let Some((num, den)) = user_keep {
                    examples = crate::datasets::subsample_by_user(examples, *num, *den);
                }
                if let Some(max) = max_rows {
                    examples.truncate(*max);
                }
                Ok(examples)
            }
            DatasetSpec::Criteo { path, max_rows } => {
                let path = resolve(base, path);
                Ok(crate::datasets::load_criteo(&path, *max_rows)?.0)
            }
            DatasetSpec::SyntheticDrift(drift) => {
                let mut drift = drift.clone();
                drift.seed = seed;
                crate::datasets::gen_synthetic_drift(&drift)
            }
            DatasetSpec::SyntheticRatings(ratings) => {
                let mut ratings = ratings.clone();
                ratings.seed = seed;
                let raw = crate::datasets::gen_ratings(&ratings);
                Ok(crate::datasets::ratings_to_examples(&raw).0)
            }
            DatasetSpec::Examples { path } => {
                let path = resolve(base, path);
                if !path.is_file() {
                    return Err(Error::MissingData(path));
                }
                let reader = std::io::BufReader::new(std::fs::File::open(&path)?);
                let mut examples = Vec::new();
                for record in crate::joiner::textio::read_records(reader)? {
                    if let crate::joiner::textio::Record::Example(e) = record {
                        examples.push(e);
                    }
                }
                examples.sort_by_key(|e| e.ts);
                Ok(examples)
            }
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# experiment settings
[dataset]
kind = synthetic-drift
num_ids = 500
num_examples = 9000

[model]
num_slots = 2
dim = 4
mlp = 16,1

[training]
seed = 7
online_shards = 5
batch_fraction = 0.5

[sync]
sparse_interval = 10
dense_interval = 50

[failure]
shard = 1
at_step = 200
";

    #[test]
    fn parses_sections_and_defaults() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.dim, 4);
        assert_eq!(cfg.model.mlp_layers, vec![16, 1]);
        assert_eq!(cfg.online_shards, 5);
        assert_eq!(cfg.num_shards, 8); // default preserved
        let schedule = cfg.sync_schedule.unwrap();
        assert_eq!(schedule.sparse_interval, 10);
        assert_eq!(schedule.dense_interval, 50);
        assert_eq!(
            cfg.failure,
            Some(FailurePlan {
                shard: 1,
                at_step: 200
            })
        );
        match cfg.dataset {
            DatasetSpec::SyntheticDrift(d) => {
                assert_eq!(d.num_ids, 500);
                assert_eq!(d.seed, 7);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let err = RunConfig::parse("[training]\nbogus_key = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("training.bogus_key"), "{msg}");
    }

    #[test]
    fn missing_kind_is_rejected() {
        let err = RunConfig::parse("[training]\nseed = 1\n").unwrap_err();
        assert!(err.to_string().contains("dataset.kind"));
    }

    #[test]
    fn bad_value_names_section_key_and_line() {
        let err = RunConfig::parse("[dataset]\nkind = synthetic-drift\nnum_ids = lots\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dataset.num_ids"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn key_before_section_is_a_parse_error() {
        assert!(RunConfig::parse("seed = 1\n").is_err());
    }

    #[test]
    fn seed_override_flows_into_synthetic_data() {
        let cfg = RunConfig::parse(
            "[dataset]\nkind = synthetic-drift\nnum_examples = 2000\nnum_ids = 50\n[training]\nseed = 3\n",
        )
        .unwrap();
        let base = Path::new(".");
        let a = cfg.load_examples(base, 3).unwrap();
        let b = cfg.load_examples(base, 3).unwrap();
        let c = cfg.load_examples(base, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
