use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, CorpusError> {
        let r = SplitRatios {
            train,
            validation,
            test,
        };
        let arr = r.as_array();
        let ok = arr.iter().all(|x| x.is_finite() && *x >= 0.0) && (arr.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(r)
        } else {
            Err(CorpusError::InvalidRatios(arr))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    /// Largest-remainder allocation of `n` items: floor every share, then hand
    /// the leftover items to the largest fractional parts, ties going to the
    /// earlier split (train, validation, test).
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let shares = self.as_array().map(|r| r * n as f64);
        let mut sizes = shares.map(|s| s.floor() as usize);
        let assigned: usize = sizes.iter().sum();
        let mut order = [0usize, 1, 2];
        // stable sort keeps split order on equal remainders
        order.sort_by(|&a, &b| {
            let ra = shares[a] - shares[a].floor();
            let rb = shares[b] - shares[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            sizes[k] += 1;
        }
        sizes
    }
}

/// Disjoint train/validation/test message id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub grouped: bool,
}

impl SplitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }
}

/// Seeded random split. With `grouped`, whole conversations are allocated
/// (the ratios then apply to conversation counts). Within each split the ids
/// keep dataset order.
pub fn split_dataset(
    dataset: &Dataset,
    ratios: SplitRatios,
    seed: u64,
    grouped: bool,
) -> Result<SplitResult, CorpusError> {
    let ratios = SplitRatios::new(ratios.train, ratios.validation, ratios.test)?;
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut rng = seed::rng(seed);
    // bucket[i] = split index of message i
    let mut bucket = vec![0usize; dataset.len()];

    if grouped {
        let groups = dataset.conversation_ids();
        if groups.len() < 3 {
            return Err(CorpusError::TooFewGroups(groups.len()));
        }
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut rng);
        let sizes = ratios.allocate(groups.len());
        let mut group_bucket = HashMap::with_capacity(groups.len());
        let mut cursor = order.into_iter();
        for (split, &size) in sizes.iter().enumerate() {
            for g in cursor.by_ref().take(size) {
                group_bucket.insert(groups[g], split);
            }
        }
        for (i, m) in dataset.messages.iter().enumerate() {
            bucket[i] = group_bucket[m.conversation_id.as_str()];
        }
    } else {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let sizes = ratios.allocate(dataset.len());
        let mut cursor = order.into_iter();
        for (split, &size) in sizes.iter().enumerate() {
            for i in cursor.by_ref().take(size) {
                bucket[i] = split;
            }
        }
    }

    let mut lists: [Vec<String>; 3] = Default::default();
    for (m, &b) in dataset.messages.iter().zip(&bucket) {
        lists[b].push(m.message_id.clone());
    }
    let [train, validation, test] = lists;
    Ok(SplitResult {
        train,
        validation,
        test,
        seed,
        grouped,
    })
}
