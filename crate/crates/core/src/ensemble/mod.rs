//! Ensemble sparse models: `x ~ sum_l beta_l D_l a_l`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dictionaries::Dictionary;
use crate::error::{check_dim, Error, Result};
use crate::operator::{DegradationOperator, OperatorDescriptor};
use crate::sparse_coding::{self, LassoConfig, LassoSolver};

mod boost;
mod multilevel;
mod weights;

pub use boost::{
    betas_from_alphas, optimal_alpha, train_boosted, train_randexav, BoostBuilder, BoostConfig, BoostRoundTrace,
};
pub use multilevel::{apply_ex_mld, train_ex_mld, ExMldConfig, MultilevelModel, PreparedMultilevel};
pub use weights::{nnls, project_simplex, residual, solve_weights, ApproximationStack, ConstraintCase, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// A single learned dictionary.
    AltOpt,
    RandExAv,
    BoostEx,
    BoostKm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AltOpt => "altopt",
            ModelKind::RandExAv => "randexav",
            ModelKind::BoostEx => "boostex",
            ModelKind::BoostKm => "boostkm",
        }
    }
}

/// How each base model turns an observation into coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coder {
    Lasso { lambda: f64 },
    OneSparse,
}

/// Tolerance of the `beta_l = alpha_l prod_{t>l} (1 - alpha_t)` identity.
pub const ALPHA_BETA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    kind: ModelKind,
    dictionaries: Vec<Dictionary>,
    weights: WeightVector,
    alphas: Option<DVector<f64>>,
    lambda_train: f64,
    trained_operator: Option<OperatorDescriptor>,
}

impl EnsembleModel {
    /// Validates shapes and, when `alphas` is given, the alpha/beta identity.
    pub fn new(
        kind: ModelKind,
        dictionaries: Vec<Dictionary>,
        weights: WeightVector,
        alphas: Option<DVector<f64>>,
        lambda_train: f64,
        trained_operator: Option<OperatorDescriptor>,
    ) -> Result<Self> {
        if dictionaries.is_empty() {
            return Err(Error::invalid("ensemble needs at least one dictionary"));
        }
        check_dim("ensemble weights", dictionaries.len(), weights.len())?;
        let m = dictionaries[0].dim();
        for d in &dictionaries {
            check_dim("dictionary dimension", m, d.dim())?;
        }
        if !(lambda_train >= 0.0) || !lambda_train.is_finite() {
            return Err(Error::invalid("lambda_train must be finite and non-negative"));
        }
        if let Some(a) = &alphas {
            check_dim("alpha count", dictionaries.len(), a.len())?;
            let expect = betas_from_alphas(a);
            if (expect - weights.betas()).amax() > ALPHA_BETA_TOL {
                return Err(Error::invalid("betas do not follow from alphas"));
            }
        }
        if kind == ModelKind::RandExAv {
            let u = 1.0 / dictionaries.len() as f64;
            if weights.betas().iter().any(|b| (b - u).abs() > 1e-12) {
                return Err(Error::invalid("RandExAv weights must all be 1/L"));
            }
        }
        Ok(Self {
            kind,
            dictionaries,
            weights,
            alphas,
            lambda_train,
            trained_operator,
        })
    }

    /// One dictionary with weight 1.
    pub fn single(kind: ModelKind, dictionary: Dictionary, lambda_train: f64) -> Result<Self> {
        let w = WeightVector::new(DVector::from_element(1, 1.0), ConstraintCase::Simplex)?;
        Self::new(kind, alloc::vec![dictionary], w, None, lambda_train, None)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dictionaries(&self) -> &[Dictionary] {
        &self.dictionaries
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn betas(&self) -> &DVector<f64> {
        self.weights.betas()
    }

    pub fn alphas(&self) -> Option<&DVector<f64>> {
        self.alphas.as_ref()
    }

    pub fn lambda_train(&self) -> f64 {
        self.lambda_train
    }

    pub fn trained_operator(&self) -> Option<&OperatorDescriptor> {
        self.trained_operator.as_ref()
    }

    pub fn len(&self) -> usize {
        self.dictionaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dictionaries.is_empty()
    }

    /// Signal dimension `M`.
    pub fn dim(&self) -> usize {
        self.dictionaries[0].dim()
    }
}

/// Codes of every column of `observations` against one dictionary.
///
/// With an operator the observations live in the measurement space and the
/// coder sees `Phi D`.
pub fn code_columns(
    dictionary: &Dictionary,
    observations: &DMatrix<f64>,
    coder: Coder,
    operator: Option<&DegradationOperator>,
) -> Result<DMatrix<f64>> {
    let eff = sparse_coding::effective_atoms(dictionary, operator)?;
    check_dim("observation length", eff.nrows(), observations.nrows())?;
    match coder {
        Coder::Lasso { lambda } => LassoSolver::new(eff, lambda, LassoConfig::default())?.solve_columns(observations),
        Coder::OneSparse => {
            let inv = sparse_coding::inverse_norms(&eff);
            let mut codes = DMatrix::zeros(eff.ncols(), observations.ncols());
            for (i, (j, v)) in sparse_coding::best_atoms(&eff, &inv, observations).into_iter().enumerate() {
                codes[(j, i)] = v;
            }
            Ok(codes)
        }
    }
}

/// Clean-space approximation `D_l a_l` of every observation, one matrix per base model.
pub fn individual_approximations(
    model: &EnsembleModel,
    observations: &DMatrix<f64>,
    coder: Coder,
    operator: Option<&DegradationOperator>,
) -> Result<Vec<DMatrix<f64>>> {
    if let Some(op) = operator {
        check_dim("operator input vs model dimension", model.dim(), op.in_dim())?;
    }
    model
        .dictionaries
        .iter()
        .map(|d| code_columns(d, observations, coder, operator).map(|a| d.atoms() * a))
        .collect()
}

/// `sum_l beta_l C_l` over precomputed approximations.
pub fn combine(betas: &DVector<f64>, approximations: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    check_dim("approximation count", betas.len(), approximations.len())?;
    let first = approximations
        .first()
        .ok_or_else(|| Error::invalid("no approximations to combine"))?;
    let mut out = DMatrix::zeros(first.nrows(), first.ncols());
    for (b, c) in betas.iter().zip(approximations) {
        out += c * *b;
    }
    Ok(out)
}

/// Sequential form `X_l = (1 - alpha_l) X_{l-1} + alpha_l C_l` from `X_0 = 0`.
pub fn combine_sequential(alphas: &DVector<f64>, approximations: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    check_dim("approximation count", alphas.len(), approximations.len())?;
    let first = approximations
        .first()
        .ok_or_else(|| Error::invalid("no approximations to combine"))?;
    let mut x = DMatrix::zeros(first.nrows(), first.ncols());
    for (a, c) in alphas.iter().zip(approximations) {
        x = x * (1.0 - a) + c * *a;
    }
    Ok(x)
}

/// Ensemble estimate of every column of `observations`, in clean space.
pub fn apply_ensemble_batch(
    model: &EnsembleModel,
    observations: &DMatrix<f64>,
    coder: Coder,
    operator: Option<&DegradationOperator>,
) -> Result<DMatrix<f64>> {
    let approx = individual_approximations(model, observations, coder, operator)?;
    combine(model.betas(), &approx)
}

/// Ensemble estimate `sum_l beta_l D_l a_l` of one observation.
pub fn apply_ensemble(
    model: &EnsembleModel,
    observation: &DVector<f64>,
    coder: Coder,
    operator: Option<&DegradationOperator>,
) -> Result<DVector<f64>> {
    let obs = DMatrix::from_column_slice(observation.len(), 1, observation.as_slice());
    let out = apply_ensemble_batch(model, &obs, coder, operator)?;
    Ok(out.column(0).into_owned())
}
