use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForestError, ForestParams, RandomForestModel, Tree, TreeNode};
use crate::corpus::Intent;
use crate::textfeat::{TfIdfModel, TfIdfRecord};

/// Semver of the model file layout. Loaders accept any file with the same
/// major version.
pub const FORMAT_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRecord {
    pub n_features: usize,
    pub classes: [Intent; 2],
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

/// The persisted vectorizer + forest + decision threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub tfidf: TfIdfRecord,
    pub forest: ForestRecord,
    pub threshold: f64,
}

fn major(version: &str) -> Option<u64> {
    version.split('.').next()?.parse().ok()
}

impl ModelFile {
    pub fn new(tfidf: &TfIdfModel, forest: &RandomForestModel, threshold: f64) -> Self {
        ModelFile {
            format: FORMAT_VERSION.into(),
            tfidf: tfidf.into(),
            forest: ForestRecord {
                n_features: forest.n_features,
                classes: RandomForestModel::CLASSES,
                params: forest.params,
                trees: forest.trees.clone(),
            },
            threshold,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ForestError::ModelFile(e.to_string()))?;
        let format = value
            .get("format")
            .and_then(|f| f.as_str())
            .ok_or_else(|| ForestError::ModelFile("missing \"format\" field".into()))?;
        let supported = major(FORMAT_VERSION);
        if major(format) != supported {
            return Err(ForestError::ModelFile(format!(
                "unsupported format version {format}, this build reads {FORMAT_VERSION}"
            )));
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| ForestError::ModelFile(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ForestError::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::ModelFile(m));
        let f = &self.forest;
        if f.classes != RandomForestModel::CLASSES {
            return bad(format!("unexpected class order {:?}", f.classes));
        }
        if f.trees.is_empty() {
            return bad("forest has no trees".into());
        }
        if f.n_features != self.tfidf.vocabulary.len() {
            return bad(format!(
                "forest expects {} features, vocabulary has {}",
                f.n_features,
                self.tfidf.vocabulary.len()
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        for (t, tree) in f.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return bad(format!("tree {t} is empty"));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Split {
                        feature_index,
                        left,
                        right,
                        threshold,
                    } => {
                        if *feature_index >= f.n_features || !threshold.is_finite() {
                            return bad(format!("tree {t} node {i}: bad split"));
                        }
                        // children after parent rules out cycles
                        if *left <= i || *right <= i || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                            return bad(format!("tree {t} node {i}: bad child index"));
                        }
                    }
                    TreeNode::Leaf { class_counts } => {
                        if class_counts[0] + class_counts[1] == 0 {
                            return bad(format!("tree {t} node {i}: empty leaf"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn into_models(self) -> Result<(TfIdfModel, RandomForestModel), ForestError> {
        let tfidf = TfIdfModel::try_from(self.tfidf).map_err(|e| ForestError::ModelFile(e.to_string()))?;
        let forest = RandomForestModel {
            trees: self.forest.trees,
            n_features: self.forest.n_features,
            params: self.forest.params,
        };
        Ok((tfidf, forest))
    }
}
