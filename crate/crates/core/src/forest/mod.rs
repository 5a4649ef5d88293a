//! Random forest over sparse TF-IDF vectors.
//!
//! Trees are CART classifiers grown on seeded bootstrap samples with a seeded
//! random subset of features considered at each split. The confidence a
//! forest reports is the mean over trees of the leaf's `ChangeTopic`
//! proportion.

mod model_file;
mod tree;
mod tune;

pub use model_file::{ModelFile, FORMAT_VERSION};
pub use tree::{Tree, TreeNode};
pub use tune::{tune, validation_macro_f1, SearchSpace, TrialRecord, TuneResult};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ChatMessage, ClassifyError, IntentClassifier, IntentPrediction};
use crate::corpus::Intent;
use crate::seed;
use crate::corpus::Dataset;
use crate::textfeat::{FeatureVector, TfIdfConfig, TfIdfModel};

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("class counts are empty")]
    EmptyCounts,
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("validation data must contain both classes")]
    ValidationSingleClass,
    #[error("every tuning trial failed")]
    AllTrialsFailed,
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Gini impurity `1 - sum(p_i^2)`.
pub fn gini(class_counts: &[u64]) -> Result<f64, ForestError> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyCounts);
    }
    let t = total as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    Sqrt,
    /// Fraction of the feature dimension, at least 1.
    Fraction(f64),
    Count(usize),
    All,
}

impl FeaturesPerSplit {
    pub fn resolve(self, dimension: usize) -> usize {
        let d = dimension.max(1);
        let k = match self {
            FeaturesPerSplit::Sqrt => (d as f64).sqrt().floor() as usize,
            FeaturesPerSplit::Fraction(f) => (f * d as f64).floor() as usize,
            FeaturesPerSplit::Count(c) => c,
            FeaturesPerSplit::All => d,
        };
        k.clamp(1, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until purity or `min_samples_leaf`.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidParams("max_depth must be >= 1".into()));
        }
        if let FeaturesPerSplit::Fraction(f) = self.features_per_split {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ForestError::InvalidParams(format!("feature fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub params: ForestParams,
}

impl RandomForestModel {
    /// The class order of leaf counts.
    pub const CLASSES: [Intent; 2] = Intent::ALL;

    pub fn fit(x: &[FeatureVector], y: &[Intent], params: ForestParams) -> Result<Self, ForestError> {
        params.validate()?;
        if x.len() != y.len() {
            return Err(ForestError::LengthMismatch {
                features: x.len(),
                labels: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(ForestError::TooFewSamples(x.len()));
        }
        let n_features = x[0].dimension;
        if let Some(bad) = x.iter().find(|v| v.dimension != n_features) {
            return Err(ForestError::DimensionMismatch {
                expected: n_features,
                got: bad.dimension,
            });
        }
        let labels: Vec<usize> = y.iter().map(|l| l.index()).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(ForestError::SingleClassTraining);
        }
        let k = params.features_per_split.resolve(n_features);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive(params.seed, t as u64));
                tree::grow(x, &labels, &params, k, &mut rng)
            })
            .collect();
        Ok(RandomForestModel {
            trees,
            n_features,
            params,
        })
    }

    /// Mean leaf `ChangeTopic` proportion over trees. Leaf proportions are
    /// summed in sorted order so the result does not depend on tree order.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ForestError> {
        if x.dimension != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.dimension,
            });
        }
        let mut props: Vec<f64> = self.trees.iter().map(|t| t.leaf_proportion(x)).collect();
        props.sort_by(f64::total_cmp);
        Ok((props.iter().sum::<f64>() / props.len() as f64).clamp(0.0, 1.0))
    }

    pub fn predict(&self, x: &FeatureVector, threshold: f64) -> Result<Intent, ForestError> {
        Ok(decide(self.predict_proba(x)?, threshold))
    }
}

/// Inclusive decision boundary: `ChangeTopic` iff `p >= threshold`.
pub fn decide(probability: f64, threshold: f64) -> Intent {
    if probability >= threshold {
        Intent::ChangeTopic
    } else {
        Intent::Continue
    }
}

/// TF-IDF vectorizer plus forest behind the classifier interface.
#[derive(Debug, Clone)]
pub struct ForestClassifier {
    pub tfidf: TfIdfModel,
    pub forest: RandomForestModel,
    pub threshold: f64,
    pub label: String,
}

impl ForestClassifier {
    pub fn new(tfidf: TfIdfModel, forest: RandomForestModel, threshold: f64) -> Self {
        ForestClassifier {
            tfidf,
            forest,
            threshold,
            label: "Random Forest".into(),
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self, ForestError> {
        let threshold = file.threshold;
        let (tfidf, forest) = file.into_models()?;
        Ok(ForestClassifier::new(tfidf, forest, threshold))
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile::new(&self.tfidf, &self.forest, self.threshold)
    }

    pub fn probability(&self, text: &str) -> Result<f64, ForestError> {
        self.forest.predict_proba(&self.tfidf.transform(text))
    }

    pub fn classify_text(&self, text: &str) -> Result<IntentPrediction, ClassifyError> {
        let start = Instant::now();
        let p = self.probability(text).map_err(|e| match e {
            ForestError::DimensionMismatch { expected, got } => ClassifyError::DimensionMismatch { expected, got },
            other => ClassifyError::MalformedResponse(other.to_string()),
        })?;
        let latency = start.elapsed().as_secs_f64().max(1e-9);
        Ok(IntentPrediction {
            intent: decide(p, self.threshold),
            confidence: Some(p),
            latency_seconds: latency,
            raw: format!("p_change_topic={p:.6}"),
        })
    }
}

impl IntentClassifier for ForestClassifier {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn classify(&self, _context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError> {
        self.classify_text(message)
    }
}

/// Fits the vectorizer on the training texts, then the forest.
pub fn fit_pipeline(train: &Dataset, tfidf: TfIdfConfig, params: ForestParams, threshold: f64) -> Result<ForestClassifier, ForestError> {
    let vectorizer = TfIdfModel::fit(&train.texts(), tfidf).map_err(|e| ForestError::InvalidParams(e.to_string()))?;
    let x = vectorizer.transform_all(&train.texts());
    let forest = RandomForestModel::fit(&x, &train.labels(), params)?;
    Ok(ForestClassifier::new(vectorizer, forest, threshold))
}

/// Random search over `space` scored on `validation`, then a refit of the
/// winning configuration.
pub fn tune_pipeline(
    train: &Dataset,
    validation: &Dataset,
    tfidf: TfIdfConfig,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<(ForestClassifier, TuneResult), ForestError> {
    let vectorizer = TfIdfModel::fit(&train.texts(), tfidf).map_err(|e| ForestError::InvalidParams(e.to_string()))?;
    let tx = vectorizer.transform_all(&train.texts());
    let ty = train.labels();
    let vx = vectorizer.transform_all(&validation.texts());
    let vy = validation.labels();
    let result = tune((&tx, &ty), (&vx, &vy), space, budget, seed)?;
    let forest = RandomForestModel::fit(&tx, &ty, result.best)?;
    Ok((ForestClassifier::new(vectorizer, forest, 0.5), result))
}
