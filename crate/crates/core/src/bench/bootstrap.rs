//! Conversation-clustered bootstrap standard errors.
//!
//! Whole conversations are resampled with replacement. When the number of
//! distinct resamples (multisets of `k` clusters drawn from `k`) does not
//! exceed `n_resamples`, the bootstrap distribution is enumerated exactly
//! with multinomial weights instead of sampled.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{metrics_from_confusion, BenchError, ConfusionMatrix, Metrics};
use crate::corpus::Intent;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub macro_f1_se: f64,
    pub macro_precision_se: f64,
    pub macro_recall_se: f64,
    pub change_precision_se: f64,
    pub change_recall_se: f64,
    pub n_clusters: usize,
    pub n_resamples: usize,
    pub seed: u64,
    pub method: BootstrapMethod,
}

/// Number of multisets of size k over k items, C(2k-1, k), saturating.
fn distinct_resamples(k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c.saturating_mul(2 * k as u128 - 1 - i) / (i + 1);
        if c > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    c
}

fn metric_vector(m: &Metrics) -> [f64; 5] {
    [m.macro_f1, m.macro_precision, m.macro_recall, m.change_precision, m.change_recall]
}

/// Visits every count vector `c` with `sum(c) = k`, passing its multinomial
/// probability `k! / prod(c_i!) / k^k`.
fn for_each_composition(k: usize, mut visit: impl FnMut(&[u64], f64)) {
    let ln_fact: Vec<f64> = (0..=k).scan(0.0, |acc, i| {
        if i > 0 {
            *acc += (i as f64).ln();
        }
        Some(*acc)
    })
    .collect();
    let base = ln_fact[k] - k as f64 * (k as f64).ln();
    let mut counts = vec![0u64; k];
    fn rec(pos: usize, left: usize, counts: &mut Vec<u64>, ln_fact: &[f64], base: f64, visit: &mut dyn FnMut(&[u64], f64)) {
        if pos + 1 == counts.len() {
            counts[pos] = left as u64;
            let ln_w = base - counts.iter().map(|&c| ln_fact[c as usize]).sum::<f64>();
            visit(counts, ln_w.exp());
            return;
        }
        for c in 0..=left {
            counts[pos] = c as u64;
            rec(pos + 1, left - c, counts, ln_fact, base, visit);
        }
    }
    rec(0, k, &mut counts, &ln_fact, base, &mut visit);
}

pub fn clustered_bootstrap(
    records: &[(Intent, Intent)],
    conversation_ids: &[&str],
    n_resamples: usize,
    seed: u64,
) -> Result<UncertaintyReport, BenchError> {
    if records.len() != conversation_ids.len() {
        return Err(BenchError::LengthMismatch {
            scores: records.len(),
            labels: conversation_ids.len(),
        });
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut clusters: Vec<ConfusionMatrix> = Vec::new();
    for (&(gold, predicted), &conv) in records.iter().zip(conversation_ids) {
        let next = clusters.len();
        let c = *index.entry(conv).or_insert(next);
        if c == next {
            clusters.push(ConfusionMatrix::default());
        }
        clusters[c].record(gold, predicted);
    }
    let k = clusters.len();
    if k < 2 {
        return Err(BenchError::TooFewClusters(k));
    }
    if n_resamples == 0 {
        return Err(BenchError::InvalidResamples);
    }

    let resample_metrics = |counts: &[u64]| -> Result<[f64; 5], BenchError> {
        let mut cm = ConfusionMatrix::default();
        for (cluster, &times) in clusters.iter().zip(counts) {
            cm.add_scaled(cluster, times);
        }
        Ok(metric_vector(&metrics_from_confusion(&cm)?))
    };

    let (se, method) = if distinct_resamples(k) <= n_resamples as u128 {
        let mut draws: Vec<(f64, [f64; 5])> = Vec::new();
        let mut failure = None;
        for_each_composition(k, |counts, w| match resample_metrics(counts) {
            Ok(m) => draws.push((w, m)),
            Err(e) => failure = Some(e),
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let mut se = [0.0; 5];
        for (j, s) in se.iter_mut().enumerate() {
            let mean: f64 = draws.iter().map(|(w, m)| w * m[j]).sum();
            *s = draws.iter().map(|(w, m)| w * (m[j] - mean).powi(2)).sum::<f64>().max(0.0).sqrt();
        }
        (se, BootstrapMethod::Exact)
    } else {
        let mut rng = seed::rng(seed);
        let mut samples: Vec<[f64; 5]> = Vec::with_capacity(n_resamples);
        let mut counts = vec![0u64; k];
        for _ in 0..n_resamples {
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..k {
                counts[rng.gen_range(0..k)] += 1;
            }
            samples.push(resample_metrics(&counts)?);
        }
        let b = samples.len() as f64;
        let mut se = [0.0; 5];
        for (j, s) in se.iter_mut().enumerate() {
            let mean = samples.iter().map(|m| m[j]).sum::<f64>() / b;
            let ss: f64 = samples.iter().map(|m| (m[j] - mean).powi(2)).sum();
            *s = if samples.len() > 1 { (ss / (b - 1.0)).sqrt() } else { 0.0 };
        }
        (se, BootstrapMethod::MonteCarlo)
    };

    Ok(UncertaintyReport {
        macro_f1_se: se[0],
        macro_precision_se: se[1],
        macro_recall_se: se[2],
        change_precision_se: se[3],
        change_recall_se: se[4],
        n_clusters: k,
        n_resamples,
        seed,
        method,
    })
}
