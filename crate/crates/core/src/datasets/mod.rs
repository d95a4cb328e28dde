//! Dataset ingestion: rating CSVs, click-log TSVs, chronological shard
//! splitting, ID-space collision statistics, and synthetic streams.

pub mod drift;
pub mod ratings_synth;

pub use drift::{gen_synthetic_drift, DriftConfig};
pub use ratings_synth::{gen_ratings, write_ratings_csv, SyntheticRatingsConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{hash_token, mix64};
use crate::types::{Example, FeatureKey};

/// Feature slot holding user ids in rating datasets.
pub const USER_SLOT: u16 = 0;
/// Feature slot holding movie ids in rating datasets.
pub const MOVIE_SLOT: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRating {
    pub user_id: u64,
    pub movie_id: u64,
    pub rating: f64,
    pub ts: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub loaded: u64,
    pub skipped: u64,
}

/// Ratings at or above 3.5 are positive.
pub fn binarize_label(rating: f64) -> Result<u8> {
    if !(0.5..=5.0).contains(&rating) {
        return Err(Error::contract(format!(
            "rating {rating} outside the 0.5..=5.0 scale"
        )));
    }
    Ok(u8::from(rating >= 3.5))
}

/// Ratings to two-slot binary examples, sorted by timestamp. Out-of-scale
/// ratings are skipped and counted.
pub fn ratings_to_examples(ratings: &[RawRating]) -> (Vec<Example>, LoadStats) {
    let mut stats = LoadStats::default();
    let mut examples = Vec::with_capacity(ratings.len());
    for r in ratings {
        match binarize_label(r.rating) {
            Ok(label) => {
                stats.loaded += 1;
                examples.push(Example::new(
                    r.ts,
                    label,
                    vec![
                        FeatureKey::new(USER_SLOT, r.user_id),
                        FeatureKey::new(MOVIE_SLOT, r.movie_id),
                    ],
                ));
            }
            Err(_) => stats.skipped += 1,
        }
    }
    examples.sort_by_key(|e| e.ts);
    (examples, stats)
}

/// Loads a `userId,movieId,rating,timestamp` CSV (ml-25m layout).
/// Malformed rows are skipped and counted.
pub fn load_movielens(path: &Path) -> Result<(Vec<Example>, LoadStats)> {
    if !path.is_file() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let mut ratings = Vec::new();
    let mut skipped = 0u64;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let parsed = (|| -> Option<RawRating> {
            Some(RawRating {
                user_id: record.get(0)?.trim().parse().ok()?,
                movie_id: record.get(1)?.trim().parse().ok()?,
                rating: record.get(2)?.trim().parse().ok()?,
                ts: record.get(3)?.trim().parse().ok()?,
            })
        })();
        match parsed {
            Some(r) => ratings.push(r),
            None => skipped += 1,
        }
    }
    let (examples, mut stats) = ratings_to_examples(&ratings);
    stats.skipped += skipped;
    Ok((examples, stats))
}

/// Deterministic user-bucket subsampling: keeps an example when
/// `mix64(user_id) % den < num`.
pub fn subsample_by_user(examples: Vec<Example>, num: u64, den: u64) -> Vec<Example> {
    examples
        .into_iter()
        .filter(|e| {
            e.features
                .iter()
                .find(|f| f.table_id == USER_SLOT)
                .is_none_or(|f| mix64(f.id) % den < num)
        })
        .collect()
}

/// Loads a click-log TSV: label, 13 integer columns, 26 categorical
/// columns. Categorical tokens hash to 64-bit ids per slot; row order is
/// the chronological order (rows carry no timestamps).
pub fn load_criteo(path: &Path, max_rows: Option<usize>) -> Result<(Vec<Example>, LoadStats)> {
    if !path.is_file() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    const INT_COLS: usize = 13;
    const CAT_COLS: usize = 26;
    let text = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    let mut stats = LoadStats::default();
    for (row, line) in text.lines().enumerate() {
        if let Some(max) = max_rows {
            if examples.len() >= max {
                break;
            }
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 1 + INT_COLS + CAT_COLS {
            stats.skipped += 1;
            continue;
        }
        let label = match fields[0] {
            "0" => 0u8,
            "1" => 1u8,
            _ => {
                stats.skipped += 1;
                continue;
            }
        };
        let mut features = Vec::with_capacity(CAT_COLS);
        for (slot, token) in fields[1 + INT_COLS..].iter().enumerate() {
            let slot = slot as u16;
            features.push(FeatureKey::new(slot, hash_token(token, u64::from(slot))));
        }
        stats.loaded += 1;
        examples.push(Example::new(row as i64, label, features));
    }
    Ok((examples, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub count_before: u64,
    pub count_after: u64,
    pub collision_rate: f64,
}

/// Fraction of distinct ids lost to a reduction:
/// `(before - after) / before`.
pub fn collision_rate(count_before: u64, count_after: u64) -> f64 {
    if count_before == 0 {
        return 0.0;
    }
    (count_before as f64 - count_after as f64) / count_before as f64
}

/// Distinct-id counts before and after mapping every id through `reducer`.
pub fn hash_collision_stats(ids: &[u64], reducer: impl Fn(u64) -> u64) -> CollisionStats {
    let mut before: Vec<u64> = ids.to_vec();
    before.sort_unstable();
    before.dedup();
    let mut after: Vec<u64> = before.iter().map(|&id| reducer(id)).collect();
    after.sort_unstable();
    after.dedup();
    CollisionStats {
        count_before: before.len() as u64,
        count_after: after.len() as u64,
        collision_rate: collision_rate(before.len() as u64, after.len() as u64),
    }
}

/// Digest-style reduction of an id into `[0, space)`.
pub fn hashed_reducer(space: u64) -> impl Fn(u64) -> u64 {
    move |id| mix64(id ^ 0x9e3779b97f4a7c15) % space
}

/// Remainder-component reduction used by the decomposed-table baseline:
/// ids sharing `id % modulus` share a remainder embedding.
pub fn remainder_reducer(modulus: u64) -> impl Fn(u64) -> u64 {
    move |id| id % modulus
}

/// Splits a time-sorted stream into `n` contiguous shards with sizes
/// equal up to one example.
pub fn split_shards(examples: Vec<Example>, n: usize) -> Result<Vec<Vec<Example>>> {
    if n == 0 {
        return Err(Error::contract("shard count must be >= 1"));
    }
    if n > examples.len() {
        return Err(Error::contract(format!(
            "cannot split {} examples into {n} shards",
            examples.len()
        )));
    }
    let len = examples.len();
    let mut shards = Vec::with_capacity(n);
    let mut rest = examples;
    for i in (0..n).rev() {
        // Target start index of shard i under the equal-split rule.
        let start = i * len / n;
        let tail = rest.split_off(start);
        shards.push(tail);
    }
    shards.reverse();
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    #[test]
    fn binarize_threshold_is_inclusive() {
        assert_eq!(binarize_label(3.5).unwrap(), 1);
        assert_eq!(binarize_label(3.4999).unwrap(), 0);
        assert_eq!(binarize_label(5.0).unwrap(), 1);
        assert_eq!(binarize_label(0.5).unwrap(), 0);
        assert!(binarize_label(0.0).is_err());
        assert!(binarize_label(5.5).is_err());
    }

    #[test]
    fn movielens_fixture_loads_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "userId,movieId,rating,timestamp").unwrap();
        writeln!(f, "1,10,4.0,300").unwrap();
        writeln!(f, "2,20,2.0,100").unwrap();
        writeln!(f, "3,30,3.5,200").unwrap();
        writeln!(f, "not,a,valid,row").unwrap();
        let (examples, stats) = load_movielens(&path).unwrap();
        assert_eq!(stats.loaded, 3);
        assert_eq!(stats.skipped, 1);
        assert_eq!(examples.len(), 3);
        let ts: Vec<i64> = examples.iter().map(|e| e.ts).collect();
        assert_eq!(ts, vec![100, 200, 300]);
        let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
        assert_eq!(labels, vec![0, 1, 1]);
        assert_eq!(examples[0].features[0], FeatureKey::new(USER_SLOT, 2));
        assert_eq!(examples[0].features[1], FeatureKey::new(MOVIE_SLOT, 20));
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_movielens(Path::new("/nonexistent/ratings.csv")),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn criteo_fixture_hashes_tokens_per_slot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("day.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        let ints = vec!["1"; 13].join("\t");
        let cats = (0..26).map(|i| format!("c{i:02x}")).collect::<Vec<_>>().join("\t");
        writeln!(f, "1\t{ints}\t{cats}").unwrap();
        writeln!(f, "0\t{ints}\t{cats}").unwrap();
        writeln!(f, "bad row").unwrap();
        let (examples, stats) = load_criteo(&path, None).unwrap();
        assert_eq!(stats.loaded, 2);
        assert_eq!(stats.skipped, 1);
        assert_eq!(examples[0].features.len(), 26);
        // Same token in different slots gets different ids.
        let same_token_path = dir.path().join("same.tsv");
        let mut g = std::fs::File::create(&same_token_path).unwrap();
        let cats_same = vec!["tok"; 26].join("\t");
        writeln!(g, "1\t{ints}\t{cats_same}").unwrap();
        let (ex2, _) = load_criteo(&same_token_path, None).unwrap();
        let ids: std::collections::HashSet<u64> =
            ex2[0].features.iter().map(|f| f.id).collect();
        assert_eq!(ids.len(), 26);
    }

    #[test]
    fn collision_rate_matches_reported_id_statistics() {
        // Fleet statistics arithmetic: (162541-149970)/162541 = 7.73%,
        // (59047-57361)/59047 = 2.86%.
        assert!((collision_rate(162_541, 149_970) * 100.0 - 7.73).abs() < 0.01);
        assert!((collision_rate(59_047, 57_361) * 100.0 - 2.86).abs() < 0.01);
    }

    #[test]
    fn injective_reducer_has_zero_rate() {
        let ids: Vec<u64> = (0..10_000).collect();
        let stats = hash_collision_stats(&ids, |id| id);
        assert_eq!(stats.collision_rate, 0.0);
        assert_eq!(stats.count_before, stats.count_after);
    }

    #[test]
    fn reduction_matches_balls_in_bins_expectation() {
        // N random ids into space M: E[distinct] = M(1 - (1 - 1/M)^N),
        // checked within 3 sigma of the exact occupancy variance.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 50_000usize;
        let m = 8_192u64;
        let ids: Vec<u64> = (0..n).map(|_| rng.random()).collect();
        let stats = hash_collision_stats(&ids, hashed_reducer(m));
        let mf = m as f64;
        let nf = stats.count_before as f64; // distinct inputs thrown
        let q = 1.0 - 1.0 / mf;
        let expect = mf * (1.0 - q.powf(nf));
        let var = mf * (mf - 1.0) * (1.0 - 2.0 / mf).powf(nf) + mf * q.powf(nf)
            - mf * mf * q.powf(2.0 * nf);
        let sigma = var.max(0.0).sqrt();
        let dev = (stats.count_after as f64 - expect).abs();
        assert!(dev <= 3.0 * sigma, "deviation {dev} vs 3 sigma {sigma}");
    }

    #[test]
    fn split_shards_examples() {
        let examples: Vec<Example> =
            (0..10).map(|i| Example::new(i, 0, vec![FeatureKey::new(0, i as u64)])).collect();
        let shards = split_shards(examples.clone(), 2).unwrap();
        assert_eq!(shards[0].len(), 5);
        assert_eq!(shards[1].len(), 5);
        assert_eq!(shards[0][0].ts, 0);
        assert_eq!(shards[1][0].ts, 5);

        let identity = split_shards(examples.clone(), 1).unwrap();
        assert_eq!(identity[0], examples);

        assert!(split_shards(examples.clone(), 11).is_err());
        assert!(split_shards(examples, 0).is_err());
    }

    #[test]
    fn split_shards_concatenation_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let len = rng.random_range(1..200usize);
            let n = rng.random_range(1..=len);
            let examples: Vec<Example> = (0..len)
                .map(|i| Example::new(i as i64, 0, vec![FeatureKey::new(0, i as u64)]))
                .collect();
            let shards = split_shards(examples.clone(), n).unwrap();
            assert_eq!(shards.len(), n);
            let max = shards.iter().map(Vec::len).max().unwrap();
            let min = shards.iter().map(Vec::len).min().unwrap();
            assert!(max - min <= 1, "sizes {min}..{max}");
            let concat: Vec<Example> = shards.into_iter().flatten().collect();
            assert_eq!(concat, examples);
        }
    }

    #[test]
    fn subsample_by_user_is_deterministic() {
        let examples: Vec<Example> = (0..1_000)
            .map(|i| {
                Example::new(
                    i as i64,
                    0,
                    vec![
                        FeatureKey::new(USER_SLOT, i as u64),
                        FeatureKey::new(MOVIE_SLOT, 1),
                    ],
                )
            })
            .collect();
        let a = subsample_by_user(examples.clone(), 1, 4);
        let b = subsample_by_user(examples.clone(), 1, 4);
        assert_eq!(a, b);
        assert!(a.len() < 400 && a.len() > 150, "kept {}", a.len());
    }
}
