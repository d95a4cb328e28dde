//! Synthetic rating data with real preference structure.
//!
//! Users and movies carry deterministic latent vectors (pure functions of
//! the seed, no stored state); the rating is driven by their dot product
//! plus per-id biases, so learned embeddings genuinely predict labels and
//! anything that entangles two ids' embeddings costs accuracy. Popularity
//! is Zipf-skewed and ids are dense and 1-based, mirroring public rating
//! dumps. Output uses the `userId,movieId,rating,timestamp` CSV layout so
//! it flows through the same loader as the real data.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::drift::ZipfSampler;
use crate::datasets::RawRating;
use crate::error::Result;
use crate::hashing::mix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRatingsConfig {
    pub num_users: u64,
    pub num_movies: u64,
    pub num_ratings: usize,
    pub latent_dim: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticRatingsConfig {
    fn default() -> Self {
        Self {
            num_users: 40_000,
            num_movies: 6_000,
            num_ratings: 250_000,
            latent_dim: 4,
            zipf_exponent: 1.1,
            seed: 1,
        }
    }
}

/// Standard normal from a hash, via Box-Muller.
fn hash_gauss(h: u64) -> f64 {
    let u1 = (mix64(h) as f64 + 1.0) / (u64::MAX as f64 + 2.0);
    let u2 = (mix64(h ^ 0x5ca1_ab1e) as f64 + 1.0) / (u64::MAX as f64 + 2.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn latent(seed: u64, kind: u64, id: u64, d: usize) -> f64 {
    hash_gauss(mix64(seed ^ kind.rotate_left(17)) ^ mix64(id) ^ (d as u64).rotate_left(43))
}

fn affinity(cfg: &SyntheticRatingsConfig, user: u64, movie: u64) -> f64 {
    let k = cfg.latent_dim;
    let mut dot = 0.0;
    for d in 0..k {
        dot += latent(cfg.seed, 1, user, d) * latent(cfg.seed, 2, movie, d);
    }
    let user_bias = 0.4 * latent(cfg.seed, 3, user, 0);
    let movie_bias = 0.4 * latent(cfg.seed, 4, movie, 0);
    dot / (k as f64).sqrt() + user_bias + movie_bias
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Chronological ratings; users and movies are 1-based dense ids.
pub fn gen_ratings(cfg: &SyntheticRatingsConfig) -> Vec<RawRating> {
    let user_zipf = ZipfSampler::new(cfg.num_users, cfg.zipf_exponent);
    let movie_zipf = ZipfSampler::new(cfg.num_movies, cfg.zipf_exponent);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.num_ratings);
    let mut ts = 1_000_000_000i64;
    for _ in 0..cfg.num_ratings {
        let user = user_zipf.sample(&mut rng) + 1;
        let movie = movie_zipf.sample(&mut rng) + 1;
        let p = sigmoid(2.0 * affinity(cfg, user, movie));
        let positive = rng.random_bool(p);
        let rating = if positive {
            [3.5, 4.0, 4.5, 5.0][rng.random_range(0..4)]
        } else {
            [0.5, 1.0, 1.5, 2.0, 2.5, 3.0][rng.random_range(0..6)]
        };
        ts += rng.random_range(1..4i64);
        out.push(RawRating {
            user_id: user,
            movie_id: movie,
            rating,
            ts,
        });
    }
    out
}

/// Writes ratings in the ml-25m CSV layout.
pub fn write_ratings_csv(path: &Path, ratings: &[RawRating]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "userId,movieId,rating,timestamp")?;
    for r in ratings {
        writeln!(w, "{},{},{},{}", r.user_id, r.movie_id, r.rating, r.ts)?;
    }
    w.flush()?;
    Ok(())
}
