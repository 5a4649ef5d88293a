//! Seeded random search over forest hyperparameters, scored by validation
//! macro-F1.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{decide, FeaturesPerSplit, ForestError, ForestParams, RandomForestModel};
use crate::bench::{metrics_from_confusion, ConfusionMatrix};
use crate::corpus::Intent;
use crate::seed;
use crate::textfeat::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Inclusive range.
    pub n_trees: (usize, usize),
    /// Candidate depths; `None` means unlimited.
    pub max_depth: Vec<Option<usize>>,
    /// Inclusive range.
    pub min_samples_leaf: (usize, usize),
    pub features_per_split: Vec<FeaturesPerSplit>,
    pub bootstrap: bool,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let mut max_depth: Vec<Option<usize>> = (4..=32).map(Some).collect();
        max_depth.push(None);
        SearchSpace {
            n_trees: (50, 400),
            max_depth,
            min_samples_leaf: (1, 8),
            features_per_split: vec![
                FeaturesPerSplit::Sqrt,
                FeaturesPerSplit::Fraction(0.1),
                FeaturesPerSplit::Fraction(0.3),
            ],
            bootstrap: true,
        }
    }
}

impl SearchSpace {
    /// Parameters for trial `trial`; depends only on `(seed, trial)`.
    pub fn sample(&self, seed: u64, trial: usize) -> ForestParams {
        let trial_seed = seed::derive(seed, trial as u64);
        let mut rng = seed::rng(trial_seed);
        ForestParams {
            n_trees: rng.gen_range(self.n_trees.0..=self.n_trees.1),
            max_depth: *self.max_depth.choose(&mut rng).unwrap_or(&None),
            min_samples_leaf: rng.gen_range(self.min_samples_leaf.0..=self.min_samples_leaf.1),
            features_per_split: *self
                .features_per_split
                .choose(&mut rng)
                .unwrap_or(&FeaturesPerSplit::Sqrt),
            bootstrap: self.bootstrap,
            seed: seed::mix(trial_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: ForestParams,
    pub validation_macro_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: ForestParams,
    pub best_validation_macro_f1: f64,
    pub trials: Vec<TrialRecord>,
}

/// `true` when `a` should replace the incumbent `b`: higher score, then fewer
/// trees, then shallower depth (unlimited is deepest).
fn better(a: (f64, &ForestParams), b: (f64, &ForestParams)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1.n_trees != b.1.n_trees {
        return a.1.n_trees < b.1.n_trees;
    }
    let depth = |p: &ForestParams| p.max_depth.unwrap_or(usize::MAX);
    depth(a.1) < depth(b.1)
}

pub fn validation_macro_f1(model: &RandomForestModel, x: &[FeatureVector], y: &[Intent]) -> Result<f64, ForestError> {
    let mut cm = ConfusionMatrix::default();
    for (xi, &yi) in x.iter().zip(y) {
        cm.record(yi, decide(model.predict_proba(xi)?, 0.5));
    }
    Ok(metrics_from_confusion(&cm)
        .map_err(|e| ForestError::InvalidParams(e.to_string()))?
        .macro_f1)
}

/// Runs `budget` trials and returns the best configuration. Failed trials
/// are logged and skipped.
pub fn tune(
    train: (&[FeatureVector], &[Intent]),
    validation: (&[FeatureVector], &[Intent]),
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<TuneResult, ForestError> {
    if budget == 0 {
        return Err(ForestError::InvalidParams("budget must be >= 1".into()));
    }
    let (vx, vy) = validation;
    if !vy.contains(&Intent::Continue) || !vy.contains(&Intent::ChangeTopic) {
        return Err(ForestError::ValidationSingleClass);
    }
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(f64, ForestParams)> = None;
    for trial in 0..budget {
        let params = space.sample(seed, trial);
        let outcome = RandomForestModel::fit(train.0, train.1, params).and_then(|m| validation_macro_f1(&m, vx, vy));
        match outcome {
            Ok(score) => {
                log::debug!("trial {trial}: macro-F1 {score:.4} with {params:?}");
                if best.as_ref().is_none_or(|(s, p)| better((score, &params), (*s, p))) {
                    best = Some((score, params));
                }
                trials.push(TrialRecord {
                    trial,
                    params,
                    validation_macro_f1: Some(score),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("tuning trial {trial} failed: {e}");
                trials.push(TrialRecord {
                    trial,
                    params,
                    validation_macro_f1: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (best_validation_macro_f1, best) = best.ok_or(ForestError::AllTrialsFailed)?;
    Ok(TuneResult {
        best,
        best_validation_macro_f1,
        trials,
    })
}
