use super::BenchError;
use crate::corpus::Intent;

/// Area under the ROC curve in its Mann-Whitney form: the probability that a
/// random `ChangeTopic` message outscores a random `Continue` one, ties
/// counting one half. Computed from midranks in O(n log n).
pub fn roc_auc(scores: &[f64], gold: &[Intent]) -> Result<f64, BenchError> {
    if scores.is_empty() || scores.iter().any(|s| s.is_nan()) {
        return Err(BenchError::NoScores);
    }
    if scores.len() != gold.len() {
        return Err(BenchError::LengthMismatch {
            scores: scores.len(),
            labels: gold.len(),
        });
    }
    let n_pos = gold.iter().filter(|g| g.is_positive()).count();
    let n_neg = gold.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(BenchError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank of the tie block i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_block = order[i..=j].iter().filter(|&&k| gold[k].is_positive()).count();
        rank_sum_pos += midrank * pos_in_block as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// AUC over prediction confidences; fails with `NoScores` when any
/// prediction lacks a confidence.
pub fn roc_auc_from_confidences(confidences: &[Option<f64>], gold: &[Intent]) -> Result<f64, BenchError> {
    let scores: Option<Vec<f64>> = confidences.iter().copied().collect();
    roc_auc(&scores.ok_or(BenchError::NoScores)?, gold)
}
