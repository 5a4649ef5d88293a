//! Tokenization and TF-IDF feature vectors.
//!
//! IDF uses the smoothed form `ln((1 + N) / (1 + df)) + 1`, so a token that
//! appears in every document still carries weight 1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TextFeatError {
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("invalid n-gram range (1, {0})")]
    InvalidNgramRange(usize),
    #[error("vocabulary is inconsistent: {0}")]
    Inconsistent(String),
}

/// Lowercased Unicode-alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Unigrams followed by every contiguous n-gram up to `ngram_max`, joined by
/// single spaces.
pub fn tokenize_ngrams(text: &str, ngram_max: usize) -> Vec<String> {
    let unigrams = tokenize(text);
    let mut out = unigrams.clone();
    for n in 2..=ngram_max {
        out.extend(unigrams.windows(n).map(|w| w.join(" ")));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfIdfConfig {
    /// Upper end of the n-gram range; the lower end is always 1.
    pub ngram_max: usize,
    pub l2_normalize: bool,
    /// Tokens seen in fewer documents are dropped from the vocabulary.
    pub min_df: usize,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig {
            ngram_max: 2,
            l2_normalize: true,
            min_df: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    tokens: Vec<String>,
    document_frequency: Vec<usize>,
    n_documents: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn document_frequency(&self, index: usize) -> usize {
        self.document_frequency[index]
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
    pub dimension: usize,
}

impl FeatureVector {
    pub fn new(mut entries: Vec<(usize, f64)>, dimension: usize) -> Self {
        entries.sort_by_key(|e| e.0);
        entries.dedup_by_key(|e| e.0);
        debug_assert!(entries.iter().all(|e| e.0 < dimension));
        FeatureVector { entries, dimension }
    }

    pub fn zeros(dimension: usize) -> Self {
        FeatureVector {
            entries: Vec::new(),
            dimension,
        }
    }

    /// Value at `index`; absent entries are zero.
    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for &(i, w) in &self.entries {
            v[i] = w;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub config: TfIdfConfig,
}

impl TfIdfModel {
    pub fn fit<S: AsRef<str>>(texts: &[S], config: TfIdfConfig) -> Result<Self, TextFeatError> {
        if texts.is_empty() {
            return Err(TextFeatError::EmptyCorpus);
        }
        if config.ngram_max == 0 {
            return Err(TextFeatError::InvalidNgramRange(0));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let mut tokens = tokenize_ngrams(text.as_ref(), config.ngram_max);
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n = texts.len();
        let mut tokens = Vec::new();
        let mut document_frequency = Vec::new();
        for (t, f) in df {
            if f >= config.min_df.max(1) {
                tokens.push(t);
                document_frequency.push(f);
            }
        }
        let idf = document_frequency.iter().map(|&f| smoothed_idf(n, f)).collect();
        let token_to_index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TfIdfModel {
            vocabulary: Vocabulary {
                token_to_index,
                tokens,
                document_frequency,
                n_documents: n,
            },
            idf,
            config,
        })
    }

    pub fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    /// Term counts times IDF, optionally L2-normalized. Out-of-vocabulary
    /// tokens are dropped.
    pub fn transform(&self, text: &str) -> FeatureVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokenize_ngrams(text, self.config.ngram_max) {
            if let Some(i) = self.vocabulary.index_of(&t) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i, c as f64 * self.idf[i]))
            .collect();
        if self.config.l2_normalize {
            let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                for e in &mut entries {
                    e.1 /= norm;
                }
            }
        }
        FeatureVector {
            entries,
            dimension: self.dimension(),
        }
    }

    pub fn transform_all<S: AsRef<str>>(&self, texts: &[S]) -> Vec<FeatureVector> {
        texts.iter().map(|t| self.transform(t.as_ref())).collect()
    }
}

pub fn smoothed_idf(n_documents: usize, document_frequency: usize) -> f64 {
    ((1.0 + n_documents as f64) / (1.0 + document_frequency as f64)).ln() + 1.0
}

/// On-disk form of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfIdfRecord {
    pub config: TfIdfConfig,
    pub n_documents: usize,
    /// `(token, document_frequency)` in index order.
    pub vocabulary: Vec<(String, usize)>,
    pub idf: Vec<f64>,
}

impl From<&TfIdfModel> for TfIdfRecord {
    fn from(m: &TfIdfModel) -> Self {
        TfIdfRecord {
            config: m.config,
            n_documents: m.vocabulary.n_documents,
            vocabulary: m
                .vocabulary
                .tokens
                .iter()
                .cloned()
                .zip(m.vocabulary.document_frequency.iter().copied())
                .collect(),
            idf: m.idf.clone(),
        }
    }
}

impl TryFrom<TfIdfRecord> for TfIdfModel {
    type Error = TextFeatError;

    fn try_from(r: TfIdfRecord) -> Result<Self, Self::Error> {
        if r.vocabulary.len() != r.idf.len() {
            return Err(TextFeatError::Inconsistent(format!(
                "{} tokens but {} idf weights",
                r.vocabulary.len(),
                r.idf.len()
            )));
        }
        let mut token_to_index = HashMap::with_capacity(r.vocabulary.len());
        let mut tokens = Vec::with_capacity(r.vocabulary.len());
        let mut document_frequency = Vec::with_capacity(r.vocabulary.len());
        for (i, (t, f)) in r.vocabulary.into_iter().enumerate() {
            if f == 0 || f > r.n_documents {
                return Err(TextFeatError::Inconsistent(format!("document frequency {f} for {t:?}")));
            }
            if token_to_index.insert(t.clone(), i).is_some() {
                return Err(TextFeatError::Inconsistent(format!("duplicate token {t:?}")));
            }
            tokens.push(t);
            document_frequency.push(f);
        }
        if r.idf.iter().any(|w| w.is_nan() || *w <= 0.0) {
            return Err(TextFeatError::Inconsistent("non-positive idf weight".into()));
        }
        Ok(TfIdfModel {
            vocabulary: Vocabulary {
                token_to_index,
                tokens,
                document_frequency,
                n_documents: r.n_documents,
            },
            idf: r.idf,
            config: r.config,
        })
    }
}
