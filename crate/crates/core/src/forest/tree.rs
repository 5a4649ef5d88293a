use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForestParams;
use crate::textfeat::FeatureVector;

/// A node in a tree's arena. Samples with `x[feature_index] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Weighted sample counts in `[Continue, ChangeTopic]` order.
        class_counts: [u64; 2],
    },
}

/// Arena of nodes; index 0 is the root and children always follow their
/// parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(&self, x: &FeatureVector) -> [u64; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { class_counts } => return *class_counts,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature_index) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_proportion(&self, x: &FeatureVector) -> f64 {
        let [c, k] = self.leaf(x);
        k as f64 / (c + k) as f64
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    /// Sum over children of `n_child * gini(child)`; lower is better.
    pub weighted_impurity: f64,
}

fn weighted_gini(c: [u64; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - (c[0] as f64 * c[0] as f64 + c[1] as f64 * c[1] as f64) / n
}

/// One distinct feature value and the weighted class counts carrying it.
type ValueGroup = (f64, [u64; 2]);

/// Scans the midpoints between consecutive distinct values of one feature.
fn best_threshold(mut groups: Vec<ValueGroup>, total: [u64; 2], min_leaf: u64) -> Option<(f64, f64)> {
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<ValueGroup> = Vec::with_capacity(groups.len());
    for (v, c) in groups {
        match merged.last_mut() {
            Some(last) if last.0 == v => {
                last.1[0] += c[0];
                last.1[1] += c[1];
            }
            _ => merged.push((v, c)),
        }
    }
    let n = total[0] + total[1];
    let mut left = [0u64; 2];
    let mut best: Option<(f64, f64)> = None;
    for w in merged.windows(2) {
        left[0] += w[0].1[0];
        left[1] += w[0].1[1];
        let n_left = left[0] + left[1];
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let score = weighted_gini(left) + weighted_gini(right);
        let mut threshold = (w[0].0 + w[1].0) / 2.0;
        if threshold >= w[1].0 {
            threshold = w[0].0;
        }
        if best.is_none_or(|(s, _)| score < s - 1e-12 * n as f64) {
            best = Some((score, threshold));
        }
    }
    best
}

/// Nonzero values of every feature present in a node, keyed by feature.
pub(crate) struct NodeColumns {
    columns: BTreeMap<usize, Vec<(f64, usize, u64)>>,
    total: [u64; 2],
    n_samples: usize,
}

impl NodeColumns {
    pub(crate) fn gather(x: &[FeatureVector], labels: &[usize], samples: &[(usize, u64)]) -> Self {
        let mut columns: BTreeMap<usize, Vec<(f64, usize, u64)>> = BTreeMap::new();
        let mut total = [0u64; 2];
        for &(s, w) in samples {
            total[labels[s]] += w;
            for &(f, v) in &x[s].entries {
                if v != 0.0 {
                    columns.entry(f).or_default().push((v, labels[s], w));
                }
            }
        }
        NodeColumns {
            columns,
            total,
            n_samples: samples.len(),
        }
    }

    /// Features whose value is not constant across the node, ascending.
    pub(crate) fn varying_features(&self) -> Vec<usize> {
        self.columns
            .iter()
            .filter(|(_, col)| col.len() < self.n_samples || col.iter().any(|e| e.0 != col[0].0))
            .map(|(f, _)| *f)
            .collect()
    }

    /// Best split over `features`, evaluated in ascending index order; the
    /// first strictly better candidate wins.
    pub(crate) fn best_split(&self, features: &[usize], min_leaf: u64) -> Option<BestSplit> {
        let total = self.total;
        let n = (total[0] + total[1]) as f64;
        let mut best: Option<BestSplit> = None;
        for &f in features {
            let Some(col) = self.columns.get(&f) else { continue };
            let mut present = [0u64; 2];
            let mut groups: Vec<ValueGroup> = Vec::with_capacity(col.len() + 1);
            for &(v, y, w) in col {
                let mut c = [0u64; 2];
                c[y] = w;
                present[y] += w;
                groups.push((v, c));
            }
            let zeros = [total[0] - present[0], total[1] - present[1]];
            if zeros[0] + zeros[1] > 0 {
                groups.push((0.0, zeros));
            }
            if let Some((score, threshold)) = best_threshold(groups, total, min_leaf) {
                if best.is_none_or(|b| score < b.weighted_impurity - 1e-12 * n) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        weighted_impurity: score,
                    });
                }
            }
        }
        best
    }
}

/// Grows one tree. `k` non-constant features are drawn per node; constant
/// features never count toward `k`.
pub(crate) fn grow(x: &[FeatureVector], labels: &[usize], params: &ForestParams, k: usize, rng: &mut ChaCha8Rng) -> Tree {
    let n = x.len();
    let mut weights = vec![0u64; n];
    if params.bootstrap {
        for _ in 0..n {
            weights[rng.gen_range(0..n)] += 1;
        }
    } else {
        weights.iter_mut().for_each(|w| *w = 1);
    }
    let root: Vec<(usize, u64)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0)
        .map(|(i, &w)| (i, w))
        .collect();

    let min_leaf = params.min_samples_leaf as u64;
    let mut nodes = vec![TreeNode::Leaf { class_counts: [0, 0] }];
    let mut stack = vec![(0usize, root, 0usize)];
    while let Some((id, samples, depth)) = stack.pop() {
        let mut counts = [0u64; 2];
        for &(s, w) in &samples {
            counts[labels[s]] += w;
        }
        let total = counts[0] + counts[1];
        let stop = counts[0] == 0
            || counts[1] == 0
            || params.max_depth.is_some_and(|d| depth >= d)
            || total < 2 * min_leaf;
        let split = if stop {
            None
        } else {
            let columns = NodeColumns::gather(x, labels, &samples);
            let mut candidates = columns.varying_features();
            candidates.shuffle(rng);
            candidates.truncate(k);
            candidates.sort_unstable();
            columns.best_split(&candidates, min_leaf)
        };
        match split {
            None => nodes[id] = TreeNode::Leaf { class_counts: counts },
            Some(b) => {
                let (left, right): (Vec<_>, Vec<_>) =
                    samples.iter().partition(|(s, _)| x[*s].get(b.feature) <= b.threshold);
                let l = nodes.len();
                nodes.push(TreeNode::Leaf { class_counts: [0, 0] });
                nodes.push(TreeNode::Leaf { class_counts: [0, 0] });
                nodes[id] = TreeNode::Split {
                    feature_index: b.feature,
                    threshold: b.threshold,
                    left: l,
                    right: l + 1,
                };
                stack.push((l + 1, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
        }
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Intent;
    use crate::forest::{FeaturesPerSplit, RandomForestModel};
    use proptest::prelude::*;

    /// Exhaustive best split: every feature, every threshold halfway between
    /// sorted distinct values, scored by explicit child Gini.
    fn oracle_best(points: &[Vec<f64>], labels: &[usize], min_leaf: usize) -> Option<f64> {
        let d = points[0].len();
        let mut best: Option<f64> = None;
        for f in 0..d {
            let mut vals: Vec<f64> = points.iter().map(|p| p[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let mut l = [0u64; 2];
                let mut r = [0u64; 2];
                for (p, &y) in points.iter().zip(labels) {
                    if p[f] <= t {
                        l[y] += 1
                    } else {
                        r[y] += 1
                    }
                }
                let (nl, nr) = (l[0] + l[1], r[0] + r[1]);
                if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                    continue;
                }
                let g = |c: [u64; 2]| {
                    let n = (c[0] + c[1]) as f64;
                    1.0 - (c[0] as f64 / n).powi(2) - (c[1] as f64 / n).powi(2)
                };
                let loss = nl as f64 * g(l) + nr as f64 * g(r);
                if best.is_none_or(|b| loss < b) {
                    best = Some(loss);
                }
            }
        }
        best
    }

    fn leaf_loss(tree: &Tree) -> f64 {
        tree.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { class_counts } => Some(weighted_gini(*class_counts)),
                _ => None,
            })
            .sum()
    }

    fn to_vectors(points: &[Vec<f64>]) -> Vec<FeatureVector> {
        points
            .iter()
            .map(|p| {
                let entries = p.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(i, v)| (i, *v)).collect();
                FeatureVector::new(entries, p.len())
            })
            .collect()
    }

    #[test]
    fn weighted_gini_matches_definition() {
        assert_eq!(weighted_gini([5, 5]), 5.0);
        assert!((weighted_gini([3, 1]) - 4.0 * 0.375).abs() < 1e-12);
    }

    #[test]
    fn children_follow_parents() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 3) as f64, (i / 3) as f64]).collect();
        let labels: Vec<usize> = (0..8).map(|i| (i * 7 % 3 == 0) as usize).collect();
        let params = ForestParams {
            bootstrap: false,
            features_per_split: FeaturesPerSplit::All,
            ..ForestParams::default()
        };
        let tree = grow(&to_vectors(&pts), &labels, &params, 2, &mut crate::seed::rng(1));
        for (i, n) in tree.nodes.iter().enumerate() {
            if let TreeNode::Split { left, right, .. } = n {
                assert!(*left > i && *right > i);
            }
        }
    }

    proptest! {
        #[test]
        fn stump_matches_exhaustive_oracle(
            raw in prop::collection::vec((prop::collection::vec(0u8..4, 3), 0usize..2), 2..=8),
            min_leaf in 1usize..3,
        ) {
            let points: Vec<Vec<f64>> = raw.iter().map(|(p, _)| p.iter().map(|v| *v as f64 * 0.25).collect()).collect();
            let labels: Vec<usize> = raw.iter().map(|r| r.1).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let y: Vec<Intent> = labels.iter().map(|&l| Intent::from_index(l)).collect();
            let params = ForestParams {
                n_trees: 1,
                max_depth: Some(1),
                min_samples_leaf: min_leaf,
                features_per_split: FeaturesPerSplit::All,
                bootstrap: false,
                seed: 0,
            };
            let model = RandomForestModel::fit(&to_vectors(&points), &y, params).unwrap();
            let tree = &model.trees[0];
            match oracle_best(&points, &labels, min_leaf) {
                Some(best) => prop_assert!((leaf_loss(tree) - best).abs() < 1e-9,
                    "tree loss {} oracle {}", leaf_loss(tree), best),
                None => prop_assert_eq!(tree.nodes.len(), 1),
            }
        }
    }
}
