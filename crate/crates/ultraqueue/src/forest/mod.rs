//! From-scratch random forest classifier with probability output.
//!
//! Trees are axis-aligned with threshold splits; categorical inputs are
//! expected to be one-hot expanded by the caller, so `p` always counts
//! post-expansion columns. Randomness enters only through bootstrap
//! resampling (when enabled) and per-split feature subsampling, with one
//! RNG stream per tree derived from the master seed — training is
//! reproducible across thread counts.

mod eval;

pub use eval::{accuracy, ovr_auc, permutation_importance, ImportanceMetric};

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("empty training data")]
    EmptyData,
    #[error("impurity of an empty count vector")]
    EmptyCounts,
    #[error("feature vector has {got} entries, schema expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("label {0} not in the class catalog")]
    UnknownLabel(u32),
    #[error("evaluation data must contain at least two labels")]
    SingleLabelEval,
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    SqrtP,
    Log2P,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_estimators: usize,
    pub bootstrap: bool,
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_estimators < 1 {
            return Err(ForestError::BadHyperparams("n_estimators < 1".into()));
        }
        if self.max_depth < 1 {
            return Err(ForestError::BadHyperparams("max_depth < 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::BadHyperparams("min_samples_split < 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(ForestError::BadHyperparams("min_samples_leaf < 1".into()));
        }
        Ok(())
    }

    /// First-level routing model settings.
    pub fn first_level(seed: u64) -> Self {
        Hyperparams {
            n_estimators: 100,
            bootstrap: false,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::SqrtP,
            min_samples_leaf: 20,
            min_samples_split: 20,
            max_depth: 9,
            seed,
        }
    }

    /// Second-level routing model settings for room types 0..=3.
    pub fn second_level(room_type: usize, seed: u64) -> Self {
        let (n_estimators, criterion, max_features, leaf, split, depth) = match room_type {
            0 => (250, Criterion::Entropy, MaxFeatures::Log2P, 10, 5, 9),
            1 => (150, Criterion::Gini, MaxFeatures::SqrtP, 1, 2, 9),
            2 => (250, Criterion::Gini, MaxFeatures::SqrtP, 1, 15, 10),
            _ => (300, Criterion::Gini, MaxFeatures::SqrtP, 1, 11, 10),
        };
        Hyperparams {
            n_estimators,
            bootstrap: false,
            criterion,
            max_features,
            min_samples_leaf: leaf,
            min_samples_split: split,
            max_depth: depth,
            seed,
        }
    }

    fn features_per_split(&self, p: usize) -> usize {
        let m = match self.max_features {
            MaxFeatures::SqrtP => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2P => (p as f64).log2().ceil() as usize,
            MaxFeatures::All => p,
        };
        m.clamp(1, p)
    }
}

/// Tree node: a threshold split (`x[feature] <= threshold` goes left) or a
/// leaf holding per-class sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

/// One decision tree as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Leaf counts for a feature vector.
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

/// Trained ensemble. `labels` is the class catalog: leaf count vectors and
/// probability outputs are aligned with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub version: u32,
    pub trees: Vec<DecisionTree>,
    pub labels: Vec<u32>,
    pub n_features: usize,
    pub hyperparams: Hyperparams,
}

impl RandomForest {
    /// Mean of per-tree leaf class frequencies; sums to 1 up to rounding.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::SchemaMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut probs = vec![0.0; self.labels.len()];
        for tree in &self.trees {
            let counts = tree.leaf_counts(x);
            let total: u32 = counts.iter().sum();
            debug_assert!(total > 0, "leaf with zero samples");
            for (p, &c) in probs.iter_mut().zip(counts) {
                *p += c as f64 / total as f64;
            }
        }
        let n = self.trees.len() as f64;
        for p in &mut probs {
            *p /= n;
        }
        Ok(probs)
    }

    /// Argmax label; probability ties break toward the lower label.
    pub fn predict(&self, x: &[f64]) -> Result<u32, ForestError> {
        let probs = self.predict_proba(x)?;
        let mut best = 0usize;
        for i in 1..probs.len() {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Ok(self.labels[best])
    }
}

/// Impurity of a class-count vector.
pub fn impurity(counts: &[u32], criterion: Criterion) -> Result<f64, ForestError> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(ForestError::EmptyCounts);
    }
    Ok(impurity_f(counts, total as f64, criterion))
}

fn impurity_f(counts: &[u32], total: f64, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Gini => {
            let mut s = 0.0;
            for &c in counts {
                let p = c as f64 / total;
                s += p * p;
            }
            1.0 - s
        }
        Criterion::Entropy => {
            let mut s = 0.0;
            for &c in counts {
                if c > 0 {
                    let p = c as f64 / total;
                    s -= p * p.log2();
                }
            }
            s
        }
    }
}

/// Trains a forest, inferring the class catalog from the labels seen in `y`.
pub fn train(
    x: &[Vec<f64>],
    y: &[u32],
    hp: &Hyperparams,
) -> Result<(RandomForest, Vec<String>), ForestError> {
    let mut catalog: Vec<u32> = y.to_vec();
    catalog.sort_unstable();
    catalog.dedup();
    train_with_catalog(x, y, &catalog, hp)
}

/// Trains a forest with an explicit class catalog (labels the forest must be
/// able to score even when absent from `y`).
pub fn train_with_catalog(
    x: &[Vec<f64>],
    y: &[u32],
    catalog: &[u32],
    hp: &Hyperparams,
) -> Result<(RandomForest, Vec<String>), ForestError> {
    hp.validate()?;
    if x.is_empty() || y.is_empty() {
        return Err(ForestError::EmptyData);
    }
    assert_eq!(x.len(), y.len(), "feature/label row counts differ");
    let p = x[0].len();
    for row in x {
        if row.len() != p {
            return Err(ForestError::SchemaMismatch {
                expected: p,
                got: row.len(),
            });
        }
    }
    let class_of: Vec<usize> = y
        .iter()
        .map(|label| {
            catalog
                .binary_search(label)
                .map_err(|_| ForestError::UnknownLabel(*label))
        })
        .collect::<Result<_, _>>()?;

    let mut warnings = Vec::new();
    let distinct: std::collections::BTreeSet<u32> = y.iter().copied().collect();
    if distinct.len() < 2 {
        warnings.push(format!(
            "training data has a single label ({}); trees are degenerate single leaves",
            y[0]
        ));
    }

    let trees: Vec<DecisionTree> = (0..hp.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = rng::stream_rng(hp.seed, t as u64);
            build_tree(x, &class_of, catalog.len(), hp, p, &mut tree_rng)
        })
        .collect();

    Ok((
        RandomForest {
            version: FOREST_FORMAT_VERSION,
            trees,
            labels: catalog.to_vec(),
            n_features: p,
            hyperparams: hp.clone(),
        },
        warnings,
    ))
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn build_tree(
    x: &[Vec<f64>],
    class_of: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
    p: usize,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let indices: Vec<u32> = if hp.bootstrap {
        (0..x.len())
            .map(|_| rng.random_range(0..x.len()) as u32)
            .collect()
    } else {
        (0..x.len() as u32).collect()
    };
    let m = hp.features_per_split(p);
    let mut nodes = Vec::new();
    grow(x, class_of, n_classes, hp, p, m, rng, &mut nodes, indices, 0);
    DecisionTree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: &[Vec<f64>],
    class_of: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
    p: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
    indices: Vec<u32>,
    depth: usize,
) -> u32 {
    let mut counts = vec![0u32; n_classes];
    for &i in &indices {
        counts[class_of[i as usize]] += 1;
    }
    let n = indices.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;

    let make_leaf = |nodes: &mut Vec<Node>| -> u32 {
        nodes.push(Node::Leaf { counts: counts.clone() });
        (nodes.len() - 1) as u32
    };

    if depth >= hp.max_depth || n < hp.min_samples_split || pure {
        return make_leaf(nodes);
    }

    // Feature subsample for this split; evaluated in ascending index order so
    // impurity ties resolve to the lower feature index.
    let mut feats: Vec<usize> = index_sample(rng, p, m).into_iter().collect();
    feats.sort_unstable();

    let parent_imp = impurity_f(&counts, n as f64, hp.criterion);
    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<u32> = Vec::with_capacity(n);

    for &f in &feats {
        sorted.clear();
        sorted.extend_from_slice(&indices);
        sorted.sort_by(|&a, &b| {
            x[a as usize][f]
                .partial_cmp(&x[b as usize][f])
                .expect("non-finite feature value")
        });

        let mut left_counts = vec![0u32; n_classes];
        let mut left_n = 0usize;
        for w in 0..n - 1 {
            let i = sorted[w] as usize;
            left_counts[class_of[i]] += 1;
            left_n += 1;
            let v = x[i][f];
            let v_next = x[sorted[w + 1] as usize][f];
            if v == v_next {
                continue;
            }
            let right_n = n - left_n;
            if left_n < hp.min_samples_leaf || right_n < hp.min_samples_leaf {
                continue;
            }
            let il = impurity_f(&left_counts, left_n as f64, hp.criterion);
            let mut right_counts = counts.clone();
            for (rc, lc) in right_counts.iter_mut().zip(&left_counts) {
                *rc -= lc;
            }
            let ir = impurity_f(&right_counts, right_n as f64, hp.criterion);
            let child = (left_n as f64 * il + right_n as f64 * ir) / n as f64;
            let gain = parent_imp - child;
            if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                best = Some(BestSplit {
                    gain,
                    feature: f,
                    threshold: v / 2.0 + v_next / 2.0,
                });
            }
        }
    }

    let Some(split) = best else {
        return make_leaf(nodes);
    };

    let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = indices
        .iter()
        .copied()
        .partition(|&i| x[i as usize][split.feature] <= split.threshold);
    if left_idx.is_empty() || right_idx.is_empty() {
        // Midpoint rounded onto one of the adjacent values.
        return make_leaf(nodes);
    }

    let node_pos = nodes.len();
    nodes.push(Node::Split {
        feature: split.feature as u32,
        threshold: split.threshold,
        left: 0,
        right: 0,
    });
    let l = grow(x, class_of, n_classes, hp, p, m, rng, nodes, left_idx, depth + 1);
    let r = grow(x, class_of, n_classes, hp, p, m, rng, nodes, right_idx, depth + 1);
    if let Node::Split { left, right, .. } = &mut nodes[node_pos] {
        *left = l;
        *right = r;
    }
    node_pos as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn hp_all(seed: u64) -> Hyperparams {
        Hyperparams {
            n_estimators: 5,
            bootstrap: false,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_depth: 8,
            seed,
        }
    }

    #[test]
    fn impurity_pure_node_zero() {
        assert_eq!(impurity(&[8, 0], Criterion::Gini).unwrap(), 0.0);
        assert_eq!(impurity(&[8, 0], Criterion::Entropy).unwrap(), 0.0);
    }

    #[test]
    fn impurity_even_split() {
        assert!((impurity(&[5, 5], Criterion::Gini).unwrap() - 0.5).abs() < 1e-12);
        assert!((impurity(&[5, 5], Criterion::Entropy).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impurity_one_three() {
        // 1 - (0.25^2 + 0.75^2) = 0.375
        assert!((impurity(&[1, 3], Criterion::Gini).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn impurity_zero_total_errors() {
        assert!(impurity(&[0, 0], Criterion::Gini).is_err());
    }

    #[test]
    fn empty_data_errors() {
        assert!(matches!(
            train(&[], &[], &hp_all(1)),
            Err(ForestError::EmptyData)
        ));
    }

    #[test]
    fn single_label_gives_degenerate_leaf_and_warning() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![7, 7, 7];
        let (forest, warnings) = train(&x, &y, &hp_all(1)).unwrap();
        assert_eq!(warnings.len(), 1);
        for tree in &forest.trees {
            assert_eq!(tree.nodes.len(), 1);
        }
        assert_eq!(forest.predict_proba(&[0.5]).unwrap(), vec![1.0]);
    }

    #[test]
    fn leaf_frequency_probability() {
        let forest = RandomForest {
            version: FOREST_FORMAT_VERSION,
            trees: vec![DecisionTree {
                nodes: vec![Node::Leaf { counts: vec![2, 6] }],
            }],
            labels: vec![0, 1],
            n_features: 1,
            hyperparams: hp_all(0),
        };
        assert_eq!(forest.predict_proba(&[0.0]).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn two_degenerate_trees_average() {
        let forest = RandomForest {
            version: FOREST_FORMAT_VERSION,
            trees: vec![
                DecisionTree {
                    nodes: vec![Node::Leaf { counts: vec![1, 0] }],
                },
                DecisionTree {
                    nodes: vec![Node::Leaf { counts: vec![0, 1] }],
                },
            ],
            labels: vec![0, 1],
            n_features: 1,
            hyperparams: hp_all(0),
        };
        assert_eq!(forest.predict_proba(&[0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn proba_sums_to_one() {
        let mut rng = crate::rng::stream_rng(11, 0);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x
            .iter()
            .map(|r| if r[0] + r[2] > 1.0 { 1 } else { 0 })
            .collect();
        let mut hp = hp_all(3);
        hp.max_features = MaxFeatures::SqrtP;
        hp.n_estimators = 20;
        let (forest, _) = train(&x, &y, &hp).unwrap();
        for row in &x {
            let p = forest.predict_proba(row).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_features_no_bootstrap_makes_identical_trees() {
        let mut rng = crate::rng::stream_rng(5, 0);
        let x: Vec<Vec<f64>> = (0..150)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[1] > 0.4) as u32).collect();
        let (forest, _) = train(&x, &y, &hp_all(9)).unwrap();
        for tree in &forest.trees[1..] {
            assert_eq!(tree, &forest.trees[0]);
        }
        // The ensemble therefore equals a single tree's output.
        for row in x.iter().take(20) {
            let single: Vec<f64> = {
                let counts = forest.trees[0].leaf_counts(row);
                let tot: u32 = counts.iter().sum();
                counts.iter().map(|&c| c as f64 / tot as f64).collect()
            };
            assert_eq!(forest.predict_proba(row).unwrap(), single);
        }
    }

    #[test]
    fn tree_order_permutation_invariance() {
        let mut rng = crate::rng::stream_rng(6, 0);
        let x: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[0] > 0.5) as u32).collect();
        let mut hp = hp_all(4);
        hp.max_features = MaxFeatures::SqrtP;
        hp.n_estimators = 8;
        let (forest, _) = train(&x, &y, &hp).unwrap();
        let mut reversed = forest.clone();
        reversed.trees.reverse();
        for row in x.iter().take(20) {
            let a = forest.predict_proba(row).unwrap();
            let b = reversed.predict_proba(row).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let mut rng = crate::rng::stream_rng(8, 0);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[2] > 0.6) as u32).collect();
        let mut hp = hp_all(77);
        hp.max_features = MaxFeatures::SqrtP;
        hp.n_estimators = 12;
        let (f1, _) = train(&x, &y, &hp).unwrap();
        let (f2, _) = train(&x, &y, &hp).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn depth_and_leaf_constraints_hold() {
        let mut rng = crate::rng::stream_rng(13, 0);
        let x: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x
            .iter()
            .map(|r| ((r[0] > 0.5) as u32) + ((r[3] > 0.5) as u32))
            .collect();
        let hp = Hyperparams {
            n_estimators: 10,
            bootstrap: false,
            criterion: Criterion::Entropy,
            max_features: MaxFeatures::SqrtP,
            min_samples_leaf: 15,
            min_samples_split: 40,
            max_depth: 4,
            seed: 21,
        };
        let (forest, _) = train(&x, &y, &hp).unwrap();
        for tree in &forest.trees {
            assert!(tree.depth() <= 4);
            for node in &tree.nodes {
                if let Node::Leaf { counts } = node {
                    let total: u32 = counts.iter().sum();
                    assert!(total >= 1);
                }
            }
            // Children of every split hold at least min_samples_leaf samples.
            fn subtree_total(nodes: &[Node], idx: usize) -> u32 {
                match &nodes[idx] {
                    Node::Leaf { counts } => counts.iter().sum(),
                    Node::Split { left, right, .. } => {
                        subtree_total(nodes, *left as usize) + subtree_total(nodes, *right as usize)
                    }
                }
            }
            for node in &tree.nodes {
                if let Node::Split { left, right, .. } = node {
                    assert!(subtree_total(&tree.nodes, *left as usize) >= 15);
                    assert!(subtree_total(&tree.nodes, *right as usize) >= 15);
                }
            }
        }
    }

    #[test]
    fn serialization_round_trip() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.9, 0.1]];
        let y = vec![0, 1, 0, 1];
        let (forest, _) = train(&x, &y, &hp_all(3)).unwrap();
        let json = serde_json::to_string(&forest).unwrap();
        let back: RandomForest = serde_json::from_str(&json).unwrap();
        assert_eq!(forest, back);
    }
}
