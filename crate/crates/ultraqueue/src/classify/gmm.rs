//! Diagonal-covariance Gaussian mixture fit by expectation-maximization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::rng;

/// Variance floor on standardized features.
pub const VAR_FLOOR: f64 = 1e-6;

/// Per-column standardization applied before fitting. Columns with zero
/// variance keep std 1 so they pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let n = rows.len() as f64;
        let d = rows.first().map_or(0, |r| r.len());
        let mut means = vec![0.0; d];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for row in rows {
            for ((v, x), m) in vars.iter_mut().zip(row).zip(&means) {
                let c = x - m;
                *v += c * c;
            }
        }
        let stds = vars
            .iter()
            .map(|&v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Fitted mixture in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
    /// Hard assignment (argmax responsibility) per input row.
    pub assignments: Vec<usize>,
    /// Log-likelihood after each EM iteration.
    pub ll_trace: Vec<f64>,
    pub n_iterations: usize,
}

impl GmmFit {
    /// Log density of a standardized point under component `c`.
    fn log_component_density(&self, z: &[f64], c: usize) -> f64 {
        log_gauss_diag(z, &self.means[c], &self.variances[c])
    }

    /// Component with the highest responsibility for a raw feature row.
    pub fn assign(&self, raw: &[f64]) -> usize {
        let z = self.standardizer.apply(raw);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..self.k {
            let v = self.weights[c].ln() + self.log_component_density(&z, c);
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        best
    }

    /// Nearest component by Mahalanobis distance (diagonal metric) for a raw
    /// feature row, used when assigning items unseen during calibration.
    pub fn nearest_mahalanobis(&self, raw: &[f64]) -> usize {
        let z = self.standardizer.apply(raw);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..self.k {
            let mut d = 0.0;
            for ((x, m), v) in z.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let diff = x - m;
                d += diff * diff / v;
            }
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

fn log_gauss_diag(z: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    const LOG_2PI: f64 = 1.8378770664093453;
    let mut acc = 0.0;
    for ((x, m), v) in z.iter().zip(mean).zip(var) {
        let diff = x - m;
        acc += -0.5 * (LOG_2PI + v.ln() + diff * diff / v);
    }
    acc
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// k-means++-style seeding: first center uniform, later centers sampled with
/// probability proportional to squared distance from the nearest chosen one.
fn kpp_centers(z: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(z[rng.random_range(0..n)].clone());
    let mut d2 = vec![0.0f64; n];
    while centers.len() < k {
        let last = centers.last().unwrap();
        for (i, row) in z.iter().enumerate() {
            let dist: f64 = row
                .iter()
                .zip(last)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if centers.len() == 1 || dist < d2[i] {
                d2[i] = dist;
            }
        }
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centers.push(z[idx].clone());
    }
    centers
}

struct EmState {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

/// E step: responsibilities and the data log-likelihood.
fn e_step(z: &[Vec<f64>], st: &EmState, resp: &mut [Vec<f64>]) -> f64 {
    let k = st.weights.len();
    let mut ll = 0.0;
    let mut logs = vec![0.0; k];
    for (i, row) in z.iter().enumerate() {
        for c in 0..k {
            logs[c] = st.weights[c].ln() + log_gauss_diag(row, &st.means[c], &st.variances[c]);
        }
        let norm = log_sum_exp(&logs);
        ll += norm;
        for c in 0..k {
            resp[i][c] = (logs[c] - norm).exp();
        }
    }
    ll
}

/// Fits a diagonal-covariance GMM on pre-standardized rows.
///
/// Exactly one EM iteration runs when `tol` is infinite; otherwise iterations
/// continue until the log-likelihood improves by less than `tol` or
/// `max_iter` is reached. A component is degenerate when its weight drops
/// below 1e-6 or its variance collapses to the floor in every dimension; the
/// first occurrence re-seeds it from the worst-fit point, the second is an
/// error.
pub fn fit_gmm(
    rows: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<GmmFit, ClassifyError> {
    if k < 1 {
        return Err(ClassifyError::BadConfig("k must be >= 1".into()));
    }
    if rows.len() < k {
        return Err(ClassifyError::BadConfig(format!(
            "{} feature rows for k={k} components",
            rows.len()
        )));
    }
    let standardizer = Standardizer::fit(rows);
    let z = standardizer.apply_all(rows);
    let d = z[0].len();
    let n = z.len();

    let mut rng = rng::stream_rng(seed, 0);
    let means = kpp_centers(&z, k, &mut rng);
    let mut st = EmState {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![vec![1.0; d]; k],
    };

    let mut resp = vec![vec![0.0; k]; n];
    let mut ll_prev = e_step(&z, &st, &mut resp);
    let mut trace = Vec::new();
    let mut reseeded = vec![false; k];
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        // M step.
        let mut degenerate: Vec<usize> = Vec::new();
        for c in 0..k {
            let rsum: f64 = resp.iter().map(|r| r[c]).sum();
            if rsum / (n as f64) < 1e-6 {
                degenerate.push(c);
                continue;
            }
            let mut mean = vec![0.0; d];
            for (row, r) in z.iter().zip(&resp) {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += r[c] * x;
                }
            }
            for m in &mut mean {
                *m /= rsum;
            }
            let mut var = vec![0.0; d];
            for (row, r) in z.iter().zip(&resp) {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    let diff = x - m;
                    *v += r[c] * diff * diff;
                }
            }
            let mut floored = 0usize;
            for v in &mut var {
                *v /= rsum;
                if *v < VAR_FLOOR {
                    *v = VAR_FLOOR;
                    floored += 1;
                }
            }
            if floored == d {
                degenerate.push(c);
                continue;
            }
            st.weights[c] = rsum / n as f64;
            st.means[c] = mean;
            st.variances[c] = var;
        }

        for &c in &degenerate {
            if reseeded[c] {
                return Err(ClassifyError::DegenerateComponent(c));
            }
            reseeded[c] = true;
            // Re-seed from the worst-fit point under the current model.
            let mut worst = 0usize;
            let mut worst_ll = f64::INFINITY;
            for (i, row) in z.iter().enumerate() {
                let logs: Vec<f64> = (0..k)
                    .map(|cc| {
                        st.weights[cc].ln()
                            + log_gauss_diag(row, &st.means[cc], &st.variances[cc])
                    })
                    .collect();
                let v = log_sum_exp(&logs);
                if v < worst_ll {
                    worst_ll = v;
                    worst = i;
                }
            }
            st.means[c] = z[worst].clone();
            st.variances[c] = vec![1.0; d];
            st.weights[c] = 1.0 / n as f64;
        }
        let wsum: f64 = st.weights.iter().sum();
        for w in &mut st.weights {
            *w /= wsum;
        }

        iterations += 1;
        let ll = e_step(&z, &st, &mut resp);
        trace.push(ll);
        if degenerate.is_empty() {
            debug_assert!(
                ll >= ll_prev - 1e-9,
                "EM log-likelihood decreased: {ll_prev} -> {ll}"
            );
        }
        if ll - ll_prev < tol {
            ll_prev = ll;
            break;
        }
        ll_prev = ll;
    }
    let _ = ll_prev;

    let assignments = resp
        .iter()
        .map(|r| {
            let mut best = 0;
            for c in 1..k {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect();

    Ok(GmmFit {
        k,
        weights: st.weights,
        means: st.means,
        variances: st.variances,
        standardizer,
        assignments,
        ll_trace: trace,
        n_iterations: iterations,
    })
}
