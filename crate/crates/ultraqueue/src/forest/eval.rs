//! Forest evaluation: accuracy, one-vs-rest AUC, permutation importance.

use rand::seq::SliceRandom;

use super::{ForestError, RandomForest};
use crate::rng;

/// Fraction of rows whose argmax prediction matches the label.
pub fn accuracy(forest: &RandomForest, x: &[Vec<f64>], y: &[u32]) -> Result<f64, ForestError> {
    assert_eq!(x.len(), y.len());
    if x.is_empty() {
        return Err(ForestError::EmptyData);
    }
    let mut hits = 0usize;
    for (row, &label) in x.iter().zip(y) {
        if forest.predict(row)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / x.len() as f64)
}

/// Tie-corrected binary AUC from scores and binary labels, by the rank
/// statistic: ties contribute one half. `None` when one side is empty.
pub fn binary_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("non-finite score"));

    // Average ranks over tied score groups (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// One-vs-rest AUC macro-averaged over the classes present in `y`.
///
/// Classes missing from the evaluation data (or without negatives) are
/// skipped and reported in the warning list.
pub fn ovr_auc(
    forest: &RandomForest,
    x: &[Vec<f64>],
    y: &[u32],
) -> Result<(f64, Vec<String>), ForestError> {
    assert_eq!(x.len(), y.len());
    if x.is_empty() {
        return Err(ForestError::EmptyData);
    }
    let distinct: std::collections::BTreeSet<u32> = y.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(ForestError::SingleLabelEval);
    }

    let probas: Vec<Vec<f64>> = x
        .iter()
        .map(|row| forest.predict_proba(row))
        .collect::<Result<_, _>>()?;

    let mut warnings = Vec::new();
    let mut total = 0.0;
    let mut used = 0usize;
    for (ci, &label) in forest.labels.iter().enumerate() {
        let positives: Vec<bool> = y.iter().map(|&v| v == label).collect();
        let scores: Vec<f64> = probas.iter().map(|p| p[ci]).collect();
        match binary_auc(&scores, &positives) {
            Some(auc) => {
                total += auc;
                used += 1;
            }
            None => warnings.push(format!(
                "class {label} absent from one side of the evaluation data; skipped"
            )),
        }
    }
    debug_assert!(used > 0);
    Ok((total / used as f64, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportanceMetric {
    Accuracy,
    OvrAuc,
}

fn metric_value(
    forest: &RandomForest,
    x: &[Vec<f64>],
    y: &[u32],
    metric: ImportanceMetric,
) -> Result<f64, ForestError> {
    match metric {
        ImportanceMetric::Accuracy => accuracy(forest, x, y),
        ImportanceMetric::OvrAuc => ovr_auc(forest, x, y).map(|(auc, _)| auc),
    }
}

/// Mean drop in the metric after shuffling each feature column, over
/// `n_repeats` shuffles. A feature no tree ever splits on scores exactly 0.
pub fn permutation_importance(
    forest: &RandomForest,
    x: &[Vec<f64>],
    y: &[u32],
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, ForestError> {
    if x.is_empty() {
        return Err(ForestError::EmptyData);
    }
    let baseline = metric_value(forest, x, y, metric)?;
    let p = forest.n_features;
    let mut importances = vec![0.0; p];
    let mut shuffled: Vec<Vec<f64>> = x.to_vec();
    for f in 0..p {
        let mut rng = rng::stream_rng(seed, f as u64);
        let mut drop_sum = 0.0;
        for _ in 0..n_repeats {
            let mut perm: Vec<usize> = (0..x.len()).collect();
            perm.shuffle(&mut rng);
            for (i, row) in shuffled.iter_mut().enumerate() {
                row[f] = x[perm[i]][f];
            }
            drop_sum += baseline - metric_value(forest, &shuffled, y, metric)?;
        }
        for (i, row) in shuffled.iter_mut().enumerate() {
            row[f] = x[i][f];
        }
        importances[f] = drop_sum / n_repeats as f64;
    }
    Ok(importances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train, Criterion, Hyperparams, MaxFeatures};
    use rand::Rng;

    fn hp(seed: u64) -> Hyperparams {
        Hyperparams {
            n_estimators: 30,
            bootstrap: false,
            criterion: Criterion::Gini,
            max_features: MaxFeatures::SqrtP,
            min_samples_leaf: 2,
            min_samples_split: 4,
            max_depth: 8,
            seed,
        }
    }

    /// O(n^2) pairwise AUC oracle with half-credit for ties.
    fn auc_pairwise(scores: &[f64], positives: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in positives.iter().enumerate() {
            if !pi {
                continue;
            }
            for (j, &pj) in positives.iter().enumerate() {
                if pj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let pos = vec![true, true, false, false];
        assert_eq!(binary_auc(&scores, &pos).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let scores = vec![0.5; 6];
        let pos = vec![true, false, true, false, true, false];
        assert!((binary_auc(&scores, &pos).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = crate::rng::stream_rng(17, 0);
        for case in 0..30 {
            let n = 5 + (case * 7) % 180;
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random::<f64>() * 8.0).round() / 8.0)
                .collect();
            let mut positives: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
            positives[0] = true;
            positives[1] = false;
            let fast = binary_auc(&scores, &positives).unwrap();
            let slow = auc_pairwise(&scores, &positives);
            assert!(
                (fast - slow).abs() < 1e-9,
                "case {case}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn unused_feature_importance_exactly_zero() {
        // Feature 1 is constant, so no split can ever use it.
        let mut rng = crate::rng::stream_rng(23, 0);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random::<f64>(), 3.0])
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[0] > 0.5) as u32).collect();
        let (forest, _) = train(&x, &y, &hp(2)).unwrap();
        let imp =
            permutation_importance(&forest, &x, &y, ImportanceMetric::Accuracy, 3, 5).unwrap();
        assert_eq!(imp[1], 0.0);
        assert!(imp[0] > 0.2);
    }

    #[test]
    fn label_defining_feature_ranks_first() {
        let mut rng = crate::rng::stream_rng(29, 0);
        let x: Vec<Vec<f64>> = (0..600)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[0] > 0.5) as u32).collect();
        let (forest, _) = train(&x, &y, &hp(3)).unwrap();
        let imp =
            permutation_importance(&forest, &x, &y, ImportanceMetric::OvrAuc, 5, 7).unwrap();
        for f in 1..4 {
            assert!(imp[0] > imp[f], "feature 0 not dominant: {imp:?}");
        }
    }

    #[test]
    fn importance_deterministic_for_fixed_seed() {
        let mut rng = crate::rng::stream_rng(31, 0);
        let x: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[1] > 0.5) as u32).collect();
        let (forest, _) = train(&x, &y, &hp(4)).unwrap();
        let a = permutation_importance(&forest, &x, &y, ImportanceMetric::Accuracy, 1, 9).unwrap();
        let b = permutation_importance(&forest, &x, &y, ImportanceMetric::Accuracy, 1, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn beats_majority_class_on_separable_data() {
        let mut rng = crate::rng::stream_rng(37, 0);
        let x: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u32> = x.iter().map(|r| (r[2] > 0.7) as u32).collect();
        let (forest, _) = train(&x, &y, &hp(5)).unwrap();
        let acc = accuracy(&forest, &x, &y).unwrap();
        let majority = y.iter().filter(|&&v| v == 0).count().max(
            y.iter().filter(|&&v| v == 1).count(),
        ) as f64
            / y.len() as f64;
        assert!(acc >= majority);
        let (auc, _) = ovr_auc(&forest, &x, &y).unwrap();
        assert!(auc >= 0.5);
    }

    #[test]
    fn single_label_eval_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 1];
        let (forest, _) = train(&x, &y, &hp(6)).unwrap();
        assert!(matches!(
            ovr_auc(&forest, &x, &[0, 0]),
            Err(ForestError::SingleLabelEval)
        ));
    }
}
