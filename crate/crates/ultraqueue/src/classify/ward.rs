//! Agglomerative hierarchical clustering with Ward linkage.
//!
//! Naive O(n^3) Lance-Williams implementation; the room universe is a few
//! dozen entries so nothing faster is warranted. Dissimilarity ties break
//! toward the pair of clusters with the smallest leaf indices, making the
//! merge sequence deterministic for a fixed input order.

use serde::{Deserialize, Serialize};

/// One merge step. `a` and `b` are cluster ids: leaves are `0..n`, the
/// cluster created by merge `i` gets id `n + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

struct Cluster {
    id: usize,
    min_leaf: usize,
    size: usize,
    leaves: Vec<usize>,
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Full Ward dendrogram over the rows; returns `n - 1` merges with
/// non-decreasing heights.
pub fn ward_linkage(rows: &[Vec<f64>]) -> Vec<Merge> {
    let n = rows.len();
    if n <= 1 {
        return Vec::new();
    }
    let mut clusters: Vec<Cluster> = (0..n)
        .map(|i| Cluster {
            id: i,
            min_leaf: i,
            size: 1,
            leaves: vec![i],
        })
        .collect();
    // Squared-distance matrix between active clusters, keyed by position.
    let mut d2: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_euclid(&rows[i], &rows[j]);
            d2[i][j] = d;
            d2[j][i] = d;
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // Active clusters stay ordered by min leaf, so the first strict
        // minimum is the smallest-index pair.
        let mut bi = 0;
        let mut bj = 1;
        let mut best = f64::INFINITY;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = d2[i][j];
                if d < best {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }

        let (ci, cj) = (clusters[bi].id, clusters[bj].id);
        let (ni, nj) = (clusters[bi].size as f64, clusters[bj].size as f64);
        merges.push(Merge {
            a: ci.min(cj),
            b: ci.max(cj),
            height: best.max(0.0).sqrt(),
            size: clusters[bi].size + clusters[bj].size,
        });

        // Lance-Williams update for Ward on squared distances.
        let dij = d2[bi][bj];
        for k in 0..clusters.len() {
            if k == bi || k == bj {
                continue;
            }
            let nk = clusters[k].size as f64;
            let upd = ((ni + nk) * d2[bi][k] + (nj + nk) * d2[bj][k] - nk * dij)
                / (ni + nj + nk);
            d2[bi][k] = upd;
            d2[k][bi] = upd;
        }

        let merged_leaves = {
            let mut l = clusters[bi].leaves.clone();
            l.extend_from_slice(&clusters[bj].leaves);
            l.sort_unstable();
            l
        };
        clusters[bi] = Cluster {
            id: n + step,
            min_leaf: merged_leaves[0],
            size: merged_leaves.len(),
            leaves: merged_leaves,
        };
        clusters.remove(bj);
        for row in &mut d2 {
            row.remove(bj);
        }
        d2.remove(bj);

        // Restore min-leaf ordering (the merged cluster keeps position bi,
        // whose min leaf is unchanged, so a full re-sort is a no-op guard).
        debug_assert!(clusters.windows(2).all(|w| w[0].min_leaf < w[1].min_leaf));
    }
    merges
}

/// Cuts a dendrogram over `n` leaves into `k` clusters. Labels are
/// 0-based, ordered by each cluster's smallest leaf index.
pub fn cut(merges: &[Merge], n: usize, k: usize) -> Vec<usize> {
    assert!(k >= 1 && k <= n, "cannot cut {n} leaves into {k} clusters");
    // Union-find over cluster ids produced by the first n - k merges.
    let mut parent: Vec<usize> = (0..n + merges.len()).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, m) in merges.iter().take(n - k).enumerate() {
        let new_id = n + i;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = new_id;
        parent[rb] = new_id;
    }
    let roots: Vec<usize> = (0..n).map(|leaf| find(&mut parent, leaf)).collect();
    // Order labels by first appearance, which is the smallest leaf index.
    let mut label_of_root: Vec<(usize, usize)> = Vec::new();
    let mut labels = vec![0usize; n];
    for (leaf, &root) in roots.iter().enumerate() {
        let label = match label_of_root.iter().find(|(r, _)| *r == root) {
            Some((_, l)) => *l,
            None => {
                let l = label_of_root.len();
                label_of_root.push((root, l));
                l
            }
        };
        labels[leaf] = label;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_merge_at_height_zero() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![9.0, 9.0]];
        let merges = ward_linkage(&rows);
        assert_eq!(merges[0].a, 0);
        assert_eq!(merges[0].b, 1);
        assert_eq!(merges[0].height, 0.0);
        let labels = cut(&merges, 3, 2);
        assert_eq!(labels[0], labels[1]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn heights_non_decreasing() {
        let mut rng = crate::rng::stream_rng(50, 0);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|_| (0..5).map(|_| rng.random::<f64>() * 10.0).collect())
            .collect();
        let merges = ward_linkage(&rows);
        for w in merges.windows(2) {
            assert!(w[1].height >= w[0].height - 1e-9);
        }
    }

    #[test]
    fn cut_to_n_gives_singletons() {
        let rows = vec![vec![0.0], vec![1.0], vec![5.0]];
        let merges = ward_linkage(&rows);
        let labels = cut(&merges, 3, 3);
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn four_blobs_recovered() {
        let mut rng = crate::rng::stream_rng(51, 0);
        use rand::Rng;
        let centers = [
            vec![0.0, 0.0, 0.0],
            vec![20.0, 0.0, 0.0],
            vec![0.0, 20.0, 0.0],
            vec![0.0, 0.0, 20.0],
        ];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (ci, c) in centers.iter().enumerate() {
            for _ in 0..6 {
                rows.push(c.iter().map(|v| v + rng.random::<f64>()).collect());
                truth.push(ci);
            }
        }
        let merges = ward_linkage(&rows);
        let labels = cut(&merges, rows.len(), 4);
        // Same-blob rows share a label; different blobs do not.
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                assert_eq!(labels[i] == labels[j], truth[i] == truth[j]);
            }
        }
    }
}
