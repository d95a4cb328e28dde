//! Count-min sketch for pre-admission occurrence counting.
//!
//! Estimates are one-sided: the reported count is never below the true
//! count. Increments go through atomics, so a shared sketch tolerates
//! concurrent writers (ordering is relaxed; accuracy degrades gracefully,
//! the one-sided bound still holds).

use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, Ordering};

use crate::hashing::seeded_mix;

pub struct CountMinSketch {
    rows: usize,
    mask: u64,
    row_seeds: Vec<u64>,
    counters: Vec<AtomicU32>,
}

impl CountMinSketch {
    /// `width_log2` gives a row width of `2^width_log2` counters.
    pub fn new(rows: usize, width_log2: u32, seed: u64) -> Self {
        assert!(rows >= 1, "sketch needs at least one row");
        let width = 1usize << width_log2;
        let counters = (0..rows * width).map(|_| AtomicU32::new(0)).collect();
        let row_seeds = (0..rows as u64).map(|r| seeded_mix(r, seed)).collect();
        Self {
            rows,
            mask: (width as u64) - 1,
            row_seeds,
            counters,
        }
    }

    #[inline]
    fn index(&self, row: usize, id: u64) -> usize {
        let h = seeded_mix(id, self.row_seeds[row]);
        row * (self.mask as usize + 1) + (h & self.mask) as usize
    }

    /// Increments the count for `id` and returns the new estimate.
    pub fn record(&self, id: u64) -> u32 {
        let mut est = u32::MAX;
        for row in 0..self.rows {
            let idx = self.index(row, id);
            let prev = self.counters[idx].fetch_add(1, Ordering::Relaxed);
            est = est.min(prev.saturating_add(1));
        }
        est
    }

    /// Current estimate without incrementing.
    pub fn estimate(&self, id: u64) -> u32 {
        (0..self.rows)
            .map(|row| self.counters[self.index(row, id)].load(Ordering::Relaxed))
            .min()
            .unwrap_or(0)
    }
}

impl std::fmt::Debug for CountMinSketch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CountMinSketch")
            .field("rows", &self.rows)
            .field("width", &(self.mask + 1))
            .finish()
    }
}

/// Occurrence counter behind the admission filter: the sketch in normal
/// operation, an exact map when tests need collision-free counts.
#[derive(Debug)]
pub enum OccurrenceCounter {
    Sketch(CountMinSketch),
    Exact(HashMap<u64, u32>),
}

impl OccurrenceCounter {
    pub fn record(&mut self, id: u64) -> u32 {
        match self {
            OccurrenceCounter::Sketch(s) => s.record(id),
            OccurrenceCounter::Exact(m) => {
                let c = m.entry(id).or_insert(0);
                *c = c.saturating_add(1);
                *c
            }
        }
    }

    pub fn estimate(&self, id: u64) -> u32 {
        match self {
            OccurrenceCounter::Sketch(s) => s.estimate(id),
            OccurrenceCounter::Exact(m) => m.get(&id).copied().unwrap_or(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn single_increment_at_least_one() {
        let s = CountMinSketch::new(4, 10, 1);
        assert!(s.record(123) >= 1);
        assert!(s.estimate(123) >= 1);
    }

    #[test]
    fn repeated_key_exact_in_empty_sketch() {
        // Only one key: no collisions possible, estimate is exact.
        let s = CountMinSketch::new(4, 10, 7);
        for k in 1..=25u32 {
            assert_eq!(s.record(99), k);
        }
        assert_eq!(s.estimate(99), 25);
    }

    #[test]
    fn estimate_dominates_exact_count() {
        // Exact-count oracle over a random workload.
        let s = CountMinSketch::new(4, 12, 3);
        let mut exact: HashMap<u64, u32> = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let id = rng.random_range(0..3_000u64);
            s.record(id);
            *exact.entry(id).or_insert(0) += 1;
        }
        for (id, count) in &exact {
            assert!(
                s.estimate(*id) >= *count,
                "estimate under exact for id {id}"
            );
        }
    }

    #[test]
    fn concurrent_increments_keep_one_sided_bound() {
        let s = Arc::new(CountMinSketch::new(4, 12, 5));
        let threads: Vec<_> = (0..4)
            .map(|t| {
                let s = Arc::clone(&s);
                std::thread::spawn(move || {
                    for i in 0..5_000u64 {
                        s.record(i % 97 + t * 1_000);
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        // Each of the 4 threads recorded its own 97-key block ~51-52 times.
        for t in 0..4u64 {
            for i in 0..97u64 {
                assert!(s.estimate(i % 97 + t * 1_000) >= 5_000 / 97);
            }
        }
    }
}
