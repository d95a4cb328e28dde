//! Expected cost of trading snapshot frequency against shard failures.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackLoss {
    /// Expected shard failures per day across the fleet.
    pub failures_per_day: f64,
    /// Users whose feedback lives on the failed shard (even id spread).
    pub users_affected_per_failure: f64,
    /// Days of their feedback lost, bounded by the snapshot interval.
    pub feedback_days_lost_per_failure: f64,
    /// Mean days between any-shard failures; infinite at zero rate.
    pub mean_days_between_failures: f64,
}

/// With `num_shards` parameter servers each failing independently at
/// `daily_failure_rate`, one of them fails every
/// `1 / (num_shards * rate)` days and takes with it the last
/// `snapshot_interval_days` of updates for `dau / num_shards` users.
pub fn expected_feedback_loss(
    num_shards: u64,
    daily_failure_rate: f64,
    dau: u64,
    snapshot_interval_days: f64,
) -> Result<FeedbackLoss> {
    if num_shards == 0 {
        return Err(Error::contract("num_shards must be >= 1"));
    }
    if !(0.0..=1.0).contains(&daily_failure_rate) {
        return Err(Error::contract(format!(
            "daily_failure_rate must be in [0, 1], got {daily_failure_rate}"
        )));
    }
    if snapshot_interval_days < 0.0 {
        return Err(Error::contract("snapshot interval must be >= 0 days"));
    }
    let failures_per_day = num_shards as f64 * daily_failure_rate;
    let mean_days_between_failures = if failures_per_day == 0.0 {
        f64::INFINITY
    } else {
        1.0 / failures_per_day
    };
    Ok(FeedbackLoss {
        failures_per_day,
        users_affected_per_failure: dau as f64 / num_shards as f64,
        feedback_days_lost_per_failure: snapshot_interval_days,
        mean_days_between_failures,
    })
}
