//! Evaluation metrics: rank-based AUC and clamped log loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability clamp applied before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy with the probability clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn log_loss(probability: f64, label: u8) -> f64 {
    let p = probability.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Rank-based AUC. Tied scores contribute half a win per tied
/// positive-negative pair. Errors when only one class is present.
pub fn auc<S: Scalar>(scores: &[S], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes; got {positives} positives / {negatives} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].to_f64_lossy().total_cmp(&scores[b].to_f64_lossy()));

    // Average ranks across tie groups, then sum positive ranks.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && scores[order[j + 1]].to_f64_lossy() == scores[order[i]].to_f64_lossy()
        {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
