//! Weighted K-Means: K-Means++ seeding, Lloyd refinement and the weighted
//! K-Means|| initialization used to build BoostKM dictionaries.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::TrainingSet;
use crate::error::{Error, Result};
use crate::linalg::sq_dist;
use crate::rng::{self, Rng};

/// Centers plus the nearest-center partition of the training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub centers: DMatrix<f64>,
    /// Cluster index of every training sample.
    pub assignments: Vec<usize>,
    /// `sum_k sum_{i in M_k} p_i ||x_i - mu_k||^2`.
    pub weighted_cost: f64,
}

impl ClusterState {
    /// State for given centers and assignments, with the cost recomputed.
    pub fn new(train: &TrainingSet, centers: DMatrix<f64>, assignments: Vec<usize>) -> Self {
        let weighted_cost = weighted_cost(train.samples(), train.masses().as_slice(), &centers, &assignments);
        Self {
            centers,
            assignments,
            weighted_cost,
        }
    }

    /// Assigns every sample to its nearest center.
    pub fn from_centers(train: &TrainingSet, centers: DMatrix<f64>) -> Self {
        let (assignments, _) = assign(train.samples(), &centers);
        Self::new(train, centers, assignments)
    }

    pub fn k(&self) -> usize {
        self.centers.ncols()
    }

    /// Member indices of every cluster.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            m[c].push(i);
        }
        m
    }
}

pub fn weighted_cost(points: &DMatrix<f64>, weights: &[f64], centers: &DMatrix<f64>, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| weights[i] * sq_dist(points.column(i), centers.column(c)))
        .sum()
}

/// Nearest center (lowest index on ties) and squared distance of every point.
pub fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    let n = points.ncols();
    let mut labels = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    if centers.ncols() == 0 {
        return (vec![0; n], vec![f64::INFINITY; n]);
    }
    let cn: Vec<f64> = centers.column_iter().map(|c| c.norm_squared()).collect();
    let mut start = 0;
    while start < n {
        let width = ASSIGN_BLOCK.min(n - start);
        let block = points.columns(start, width);
        let cross = centers.tr_mul(&block);
        for j in 0..width {
            let p = block.column(j);
            let pn = p.norm_squared();
            let approx = |k: usize| pn + cn[k] - 2.0 * cross[(k, j)];
            let lo = (0..cn.len()).map(approx).fold(f64::INFINITY, f64::min);
            // exact distances for every center the expansion cannot rule out
            let slack = 1e-9 * (pn + lo.abs()) + 1e-300;
            let mut best = (0usize, f64::INFINITY);
            for k in 0..cn.len() {
                if approx(k) <= lo + slack {
                    let d = sq_dist(p, centers.column(k));
                    if d < best.1 {
                        best = (k, d);
                    }
                }
            }
            labels.push(best.0);
            d2.push(best.1);
        }
        start += width;
    }
    (labels, d2)
}

const ASSIGN_BLOCK: usize = 256;

/// Weighted K-Means++ seeding: first center drawn by weight, later ones by
/// `weight * D^2`. When every weighted distance is zero the draw falls back
/// to the weights alone (duplicate centers are then possible).
pub fn kmeans_pp_seed(points: &DMatrix<f64>, weights: &[f64], k: usize, rng: &mut Rng) -> DMatrix<f64> {
    let n = points.ncols();
    let mut centers = DMatrix::zeros(points.nrows(), k);
    if n == 0 || k == 0 {
        return centers;
    }
    let base: Vec<f64> = if weights.iter().any(|w| *w > 0.0) {
        weights.to_vec()
    } else {
        vec![1.0; n]
    };
    let first = draw_one(rng, &base);
    centers.set_column(0, &points.column(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.column(i), points.column(first))).collect();
    for c in 1..k {
        let w: Vec<f64> = base.iter().zip(&d2).map(|(a, b)| a * b).collect();
        let pick = if w.iter().any(|v| *v > 0.0) {
            draw_one(rng, &w)
        } else {
            draw_one(rng, &base)
        };
        centers.set_column(c, &points.column(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.column(i), points.column(pick)));
        }
    }
    centers
}

fn draw_one(rng: &mut Rng, weights: &[f64]) -> usize {
    rng::weighted_with_replacement(rng, weights, 1).map(|v| v[0]).unwrap_or(0)
}

/// Weighted Lloyd iterations until the assignment is a fixpoint or
/// `max_iter` is reached. Clusters with no weight keep their center.
///
/// Returns centers, assignments and the cost after each assignment step.
pub fn weighted_lloyd(
    points: &DMatrix<f64>,
    weights: &[f64],
    mut centers: DMatrix<f64>,
    max_iter: usize,
) -> (DMatrix<f64>, Vec<usize>, Vec<f64>) {
    let (mut labels, _) = assign(points, &centers);
    let mut history = vec![weighted_cost(points, weights, &centers, &labels)];
    for _ in 0..max_iter {
        let mut moved = centers.clone();
        update_centers(points, weights, &labels, &mut moved);
        let (next, _) = assign(points, &moved);
        let cost = weighted_cost(points, weights, &moved, &next);
        if cost > history[history.len() - 1] {
            break;
        }
        history.push(cost);
        centers = moved;
        let done = next == labels;
        labels = next;
        if done {
            break;
        }
    }
    (centers, labels, history)
}

fn update_centers(points: &DMatrix<f64>, weights: &[f64], labels: &[usize], centers: &mut DMatrix<f64>) {
    let k = centers.ncols();
    let mut sums = DMatrix::zeros(points.nrows(), k);
    let mut mass = vec![0.0; k];
    for (i, &c) in labels.iter().enumerate() {
        if weights[i] > 0.0 {
            let mut col = sums.column_mut(c);
            col.axpy(weights[i], &points.column(i), 1.0);
            mass[c] += weights[i];
        }
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            let m = sums.column(c) / mass[c];
            centers.set_column(c, &m);
        }
    }
}

/// Weighted Lloyd refinement of a state on its own training set.
///
/// The returned cost history (one entry per assignment step) never increases.
pub fn lloyd_refine(train: &TrainingSet, state: &ClusterState, max_iter: usize) -> (ClusterState, Vec<f64>) {
    let (centers, labels, history) =
        weighted_lloyd(train.samples(), train.masses().as_slice(), state.centers.clone(), max_iter);
    (ClusterState::new(train, centers, labels), history)
}

/// Plain (or weighted) K-Means with several K-Means++ restarts; keeps the lowest cost.
pub fn kmeans(
    points: &DMatrix<f64>,
    weights: &[f64],
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> (DMatrix<f64>, Vec<usize>, f64) {
    let mut best: Option<(DMatrix<f64>, Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        let mut g = rng::seeded(rng::split_seed(seed, r as u64));
        let init = kmeans_pp_seed(points, weights, k, &mut g);
        let (c, l, h) = weighted_lloyd(points, weights, init, max_iter);
        let cost = *h.last().unwrap_or(&f64::INFINITY);
        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((c, l, cost));
        }
    }
    best.unwrap_or_else(|| (DMatrix::zeros(points.nrows(), k), vec![0; points.ncols()], 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParallelConfig {
    pub k: usize,
    /// Candidates drawn per round.
    pub q: usize,
    /// Number of oversampling rounds.
    pub s: usize,
    /// Lloyd iterations of the final re-clustering.
    pub recluster_iters: usize,
    /// K-Means++ restarts of the final re-clustering; the cheapest is kept.
    pub recluster_restarts: usize,
}

impl KMeansParallelConfig {
    /// `q = 2K`, `s = 5`.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            q: 2 * k,
            s: 5,
            recluster_iters: 100,
            recluster_restarts: 3,
        }
    }
}

/// Weighted K-Means|| initialization.
///
/// 1. Start with one center drawn from the sample masses.
/// 2. For `s` rounds draw `q` candidates independently with probability
///    `p_i d_i^2 / sum_j p_j d_j^2`, `d_i` being the distance of sample `i`
///    to the nearest chosen center, and add them to the chosen set.
/// 3. Weight every chosen point by the total mass of the samples closest to it.
/// 4. Re-cluster the weighted chosen points down to `K` centers (weighted
///    K-Means++ seeding, then weighted Lloyd, best of `recluster_restarts`).
pub fn weighted_kmeans_parallel_init(train: &TrainingSet, config: &KMeansParallelConfig, seed: u64) -> Result<ClusterState> {
    let KMeansParallelConfig {
        k,
        q,
        s,
        recluster_iters,
        recluster_restarts,
    } = *config;
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    if s * q <= k {
        return Err(Error::invalid("K-Means|| needs s * q > K"));
    }
    if train.len() < k {
        return Err(Error::NotEnoughSamples {
            needed: k,
            available: train.len(),
        });
    }
    let x = train.samples();
    let p = train.masses().as_slice();
    let mut r = rng::seeded(seed);

    let mut chosen = vec![draw_one(&mut r, p)];
    let mut d2: Vec<f64> = (0..train.len()).map(|i| sq_dist(x.column(i), x.column(chosen[0]))).collect();
    for _ in 0..s {
        let w: Vec<f64> = p.iter().zip(&d2).map(|(a, b)| a * b).collect();
        if !w.iter().any(|v| *v > 0.0) {
            break;
        }
        let picks = rng::weighted_with_replacement(&mut r, &w, q)?;
        for &c in &picks {
            for (i, d) in d2.iter_mut().enumerate() {
                *d = d.min(sq_dist(x.column(i), x.column(c)));
            }
        }
        chosen.extend(picks);
    }

    let candidates = x.select_columns(&chosen);
    let (nearest, _) = assign(x, &candidates);
    let mut cand_weights = vec![0.0; chosen.len()];
    for (i, &c) in nearest.iter().enumerate() {
        cand_weights[c] += p[i];
    }

    let (centers, _, _) = kmeans(&candidates, &cand_weights, k, recluster_restarts, recluster_iters, rng::split_seed(seed, 1));
    Ok(ClusterState::from_centers(train, centers))
}
