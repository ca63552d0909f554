//! Sparse-code similarity graphs and spectral clustering.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dictionaries::Dictionary;
use crate::ensemble::{code_columns, Coder, EnsembleModel, ModelKind};
use crate::error::{check_dim, Error, Result};
use crate::sparse_coding::{code_batch, LassoConfig, LassoSolver};

mod score;
mod spectral;

pub use score::{contingency, hungarian_max, nmi, score, Scores};
pub use spectral::{spectral_cluster, spectral_embedding, ClusteringResult, SPECTRAL_RESTARTS};

/// Penalty used for the clustering coders unless configured otherwise.
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphConstruction {
    L1Graph,
    DictCode,
    EnsembleExample,
    EnsembleKmeans,
}

/// Symmetric non-negative `T x T` affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: DMatrix<f64>,
    construction: GraphConstruction,
}

impl SimilarityGraph {
    /// Checks squareness, finiteness, non-negativity and symmetry (1e-12 relative).
    pub fn new(weights: DMatrix<f64>, construction: GraphConstruction) -> Result<Self> {
        check_dim("graph columns", weights.nrows(), weights.ncols())?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("graph weights must be finite and non-negative"));
        }
        let scale = weights.amax().max(1.0);
        for i in 0..weights.nrows() {
            for j in 0..i {
                if (weights[(i, j)] - weights[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("graph is not symmetric"));
                }
            }
        }
        Ok(Self { weights, construction })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn construction(&self) -> GraphConstruction {
        self.construction
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }
}

/// Subtracts the mean sample, then scales every column to unit norm.
///
/// Columns that are zero after centering stay zero.
pub fn center_and_normalize(samples: &DMatrix<f64>) -> DMatrix<f64> {
    let t = samples.ncols().max(1) as f64;
    let mean: DVector<f64> = samples.column_sum() / t;
    let mut out = samples.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    out
}

/// `|A| + |A^T|`.
fn symmetric_abs(a: &DMatrix<f64>) -> DMatrix<f64> {
    let abs = a.abs();
    &abs + abs.transpose()
}

/// `|A^T A|`, symmetrized against rounding.
fn gram_abs(a: &DMatrix<f64>) -> DMatrix<f64> {
    let g = a.tr_mul(a).abs();
    (&g + g.transpose()) * 0.5
}

/// Codes each sample over all the others (`a_ii = 0`); `S = |A| + |A^T|`.
///
/// Expects centered, unit-norm samples; see [`center_and_normalize`].
pub fn build_l1_graph(samples: &DMatrix<f64>, lambda: f64) -> Result<SimilarityGraph> {
    let t = samples.ncols();
    if t < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, available: t });
    }
    let solver = LassoSolver::new(samples.clone(), lambda, LassoConfig::default())?;
    let cols = crate::par::map_indices(t, |i| {
        let x = samples.column(i).into_owned();
        solver
            .solve_excluding(&x, Some(i))
            .map(|c| c.coefficients)
            .map_err(|e| e.at_sample(i))
    });
    let mut a = DMatrix::zeros(t, t);
    for (i, c) in cols.into_iter().enumerate() {
        let mut c = c?;
        c[i] = 0.0;
        a.set_column(i, &c);
    }
    SimilarityGraph::new(symmetric_abs(&a), GraphConstruction::L1Graph)
}

/// Lasso codes against a learned dictionary; `S = |A^T A|`.
pub fn build_dictionary_code_graph(samples: &DMatrix<f64>, dictionary: &Dictionary, lambda: f64) -> Result<SimilarityGraph> {
    let a = code_batch(samples, dictionary, lambda, None)?;
    SimilarityGraph::new(gram_abs(&a), GraphConstruction::DictCode)
}

/// Cumulative example-indexed codes `A_bar` (`T x T`, column `i` for sample `i`).
///
/// Each base model's 1-sparse code of sample `i` picks one example atom;
/// its value lands on that example's index, weighted by `beta_l`. Self
/// entries are zeroed.
pub fn cumulative_example_codes(samples: &DMatrix<f64>, model: &EnsembleModel) -> Result<DMatrix<f64>> {
    let t = samples.ncols();
    let mut a_bar = DMatrix::zeros(t, t);
    for (d, beta) in model.dictionaries().iter().zip(model.betas().iter()) {
        let origin = d
            .origin()
            .ok_or_else(|| Error::invalid("example graph needs dictionaries with source indices"))?;
        if let Some(&bad) = origin.iter().find(|&&o| o >= t) {
            return Err(Error::invalid(alloc::format!(
                "dictionary atom comes from sample {bad} but only {t} samples were given"
            )));
        }
        let codes = code_columns(d, samples, Coder::OneSparse, None)?;
        for i in 0..t {
            for (j, v) in codes.column(i).iter().enumerate() {
                if *v != 0.0 {
                    a_bar[(origin[j], i)] += beta * v;
                }
            }
        }
    }
    for i in 0..t {
        a_bar[(i, i)] = 0.0;
    }
    Ok(a_bar)
}

/// Stacked `L K`-length 1-sparse codes, one column per sample.
pub fn stacked_codes(samples: &DMatrix<f64>, model: &EnsembleModel) -> Result<DMatrix<f64>> {
    let blocks = model
        .dictionaries()
        .iter()
        .map(|d| code_columns(d, samples, Coder::OneSparse, None))
        .collect::<Result<Vec<_>>>()?;
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, samples.ncols());
    let mut at = 0;
    for b in &blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

/// Graph from an ensemble's 1-sparse codes.
///
/// Example-based models (RandExAv, BoostEx) use `S = |A_bar| + |A_bar^T|`
/// over [`cumulative_example_codes`]; the others use `S = |A^T A|` over
/// [`stacked_codes`].
pub fn build_ensemble_graph(samples: &DMatrix<f64>, model: &EnsembleModel) -> Result<SimilarityGraph> {
    check_dim("sample dimension", model.dim(), samples.nrows())?;
    match model.kind() {
        ModelKind::RandExAv | ModelKind::BoostEx => {
            let a = cumulative_example_codes(samples, model)?;
            SimilarityGraph::new(symmetric_abs(&a), GraphConstruction::EnsembleExample)
        }
        ModelKind::BoostKm | ModelKind::AltOpt => {
            let a = stacked_codes(samples, model)?;
            SimilarityGraph::new(gram_abs(&a), GraphConstruction::EnsembleKmeans)
        }
    }
}
