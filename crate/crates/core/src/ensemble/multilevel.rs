//! Multilevel example-dictionary learning (Ex-MLD).
//!
//! Each level holds `L` random example dictionaries drawn from the residuals
//! left by the previous levels. A level approximates its input by the plain
//! average of the `L` best 1-sparse approximations, and hands the remainder on.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dictionaries::{draw_random_example_dictionary, Dictionary, TrainingSet};
use crate::error::{check_dim, Error, Result};
use crate::operator::DegradationOperator;
use crate::rng::split_seed;
use crate::sparse_coding::{best_atoms, effective_atoms, inverse_norms};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExMldConfig {
    pub levels: usize,
    pub atoms_per_level: usize,
    /// Dictionaries averaged per level (`L`).
    pub ensemble_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelModel {
    levels: Vec<Vec<Dictionary>>,
}

impl MultilevelModel {
    pub fn new(levels: Vec<Vec<Dictionary>>) -> Result<Self> {
        let m = levels
            .first()
            .and_then(|l| l.first())
            .map(Dictionary::dim)
            .ok_or_else(|| Error::invalid("multilevel model needs a non-empty first level"))?;
        for level in &levels {
            if level.is_empty() {
                return Err(Error::invalid("every level needs at least one dictionary"));
            }
            for d in level {
                check_dim("level dictionary dimension", m, d.dim())?;
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Vec<Dictionary>] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels[0][0].dim()
    }

    /// Precomputes the (operator-composed) atoms used for correlations.
    pub fn prepare(&self, operator: Option<&DegradationOperator>) -> Result<PreparedMultilevel<'_>> {
        if let Some(op) = operator {
            check_dim("operator input vs model dimension", self.dim(), op.in_dim())?;
        }
        let levels = self
            .levels
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|d| {
                        let eff = effective_atoms(d, operator)?;
                        let inv = inverse_norms(&eff);
                        Ok(PreparedDictionary { clean: d, eff, inv })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedMultilevel { levels })
    }
}

struct PreparedDictionary<'a> {
    clean: &'a Dictionary,
    eff: DMatrix<f64>,
    inv: Vec<f64>,
}

/// A multilevel model bound to one degradation operator (or none).
pub struct PreparedMultilevel<'a> {
    levels: Vec<Vec<PreparedDictionary<'a>>>,
}

impl PreparedMultilevel<'_> {
    /// Clean-space estimates for every column of `observations`.
    pub fn apply_batch(&self, observations: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let first = &self.levels[0][0];
        check_dim("observation length", first.eff.nrows(), observations.nrows())?;
        let mut residual = observations.clone();
        let mut estimate = DMatrix::zeros(first.clean.dim(), observations.ncols());
        for level in &self.levels {
            let (clean, observed) = level_step(level, &residual);
            estimate += clean;
            residual -= observed;
        }
        Ok(estimate)
    }

    pub fn apply(&self, observation: &DVector<f64>) -> Result<DVector<f64>> {
        let obs = DMatrix::from_column_slice(observation.len(), 1, observation.as_slice());
        Ok(self.apply_batch(&obs)?.column(0).into_owned())
    }
}

// Averaged 1-sparse approximation of each residual column, returned in clean
// space and in observation space.
fn level_step(level: &[PreparedDictionary<'_>], residual: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = residual.ncols();
    let share = 1.0 / level.len() as f64;
    let mut clean = DMatrix::zeros(level[0].clean.dim(), t);
    let mut observed = DMatrix::zeros(residual.nrows(), t);
    for d in level {
        for (i, (j, v)) in best_atoms(&d.eff, &d.inv, residual).into_iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let w = v * share;
            clean.column_mut(i).axpy(w, &d.clean.atoms().column(j), 1.0);
            observed.column_mut(i).axpy(w, &d.eff.column(j), 1.0);
        }
    }
    (clean, observed)
}

/// Trains Ex-MLD on clean samples.
///
/// Returns the model and the mean residual energy `mean_i ||r_i||^2` after
/// each trained level. Training stops early once fewer nonzero residuals
/// remain than atoms per level.
pub fn train_ex_mld(train: &TrainingSet, config: &ExMldConfig) -> Result<(MultilevelModel, Vec<f64>)> {
    if config.levels == 0 || config.atoms_per_level == 0 || config.ensemble_size == 0 {
        return Err(Error::invalid("Ex-MLD needs levels, atoms per level and L all >= 1"));
    }
    let t = train.len() as f64;
    let mut residual = train.samples().clone();
    let mut levels = Vec::with_capacity(config.levels);
    let mut energies = Vec::with_capacity(config.levels);
    for level in 0..config.levels {
        let current = TrainingSet::uniform(residual.clone())?;
        let level_seed = split_seed(config.seed, level as u64);
        let drawn = (0..config.ensemble_size)
            .map(|l| draw_random_example_dictionary(&current, config.atoms_per_level, split_seed(level_seed, l as u64)))
            .collect::<Result<Vec<_>>>();
        let dicts = match drawn {
            Ok(d) => d,
            Err(Error::NotEnoughSamples { .. }) if !levels.is_empty() => break,
            Err(e) => return Err(e),
        };
        let prepared: Vec<PreparedDictionary<'_>> = dicts
            .iter()
            .map(|d| PreparedDictionary {
                clean: d,
                eff: d.atoms().clone(),
                inv: inverse_norms(d.atoms()),
            })
            .collect();
        let (clean, _) = level_step(&prepared, &residual);
        residual -= clean;
        energies.push(residual.norm_squared() / t);
        levels.push(dicts);
    }
    Ok((MultilevelModel::new(levels)?, energies))
}

/// Ex-MLD estimate of one observation (`Phi y`, or `y` itself without an operator).
pub fn apply_ex_mld(
    model: &MultilevelModel,
    observation: &DVector<f64>,
    operator: Option<&DegradationOperator>,
) -> Result<DVector<f64>> {
    model.prepare(operator)?.apply(observation)
}
