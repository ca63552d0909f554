use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use super::score::{score, Scores};
use super::SimilarityGraph;
use crate::dictionaries::kmeans;
use crate::error::{Error, Result};
use crate::math;

/// K-Means++ restarts on the spectral embedding.
pub const SPECTRAL_RESTARTS: usize = 20;

const LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Filled in by [`ClusteringResult::with_truth`].
    pub scores: Option<Scores>,
}

impl ClusteringResult {
    pub fn with_truth(mut self, truth: &[usize]) -> Result<Self> {
        self.scores = Some(score(&self.labels, truth)?);
        Ok(self)
    }
}

/// Rows of the top-`k` eigenvectors of `D^{-1/2} S D^{-1/2}`, each scaled
/// to unit norm. Returned as a `k x T` matrix (one column per sample).
pub fn spectral_embedding(graph: &SimilarityGraph, k: usize) -> Result<DMatrix<f64>> {
    let s = graph.weights();
    let t = s.nrows();
    if k == 0 || k > t {
        return Err(Error::invalid("cluster count must be in 1..=T"));
    }
    if s.iter().all(|w| *w == 0.0) {
        return Err(Error::EmptyGraph);
    }
    let inv_sqrt: Vec<f64> = s
        .column_iter()
        .map(|c| {
            let d = c.sum();
            if d > 0.0 {
                1.0 / math::sqrt(d)
            } else {
                0.0
            }
        })
        .collect();
    let n = DMatrix::from_fn(t, t, |i, j| s[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let eig = SymmetricEigen::new(n);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut emb = DMatrix::zeros(k, t);
    for (r, &e) in order.iter().take(k).enumerate() {
        for i in 0..t {
            emb[(r, i)] = eig.eigenvectors[(i, e)];
        }
    }
    for mut col in emb.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(emb)
}

/// Normalized spectral clustering: embedding, then K-Means++ with
/// [`SPECTRAL_RESTARTS`] restarts. Deterministic for a given seed.
pub fn spectral_cluster(graph: &SimilarityGraph, k: usize, seed: u64) -> Result<ClusteringResult> {
    let emb = spectral_embedding(graph, k)?;
    let weights = alloc::vec![1.0; emb.ncols()];
    let (_, labels, _) = kmeans::kmeans(&emb, &weights, k, SPECTRAL_RESTARTS, LLOYD_ITERS, seed);
    Ok(ClusteringResult { labels, k, scores: None })
}
