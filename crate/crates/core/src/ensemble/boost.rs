//! Greedy forward (boosted) ensemble training and random-example averaging.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{code_columns, Coder, ConstraintCase, EnsembleModel, ModelKind, WeightVector};
use crate::dictionaries::{
    self, dictionary_from_clusters, weighted_kmeans_parallel_init, Dictionary, KMeansParallelConfig, TrainingSet,
};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::math;
use crate::operator::DegradationOperator;
use crate::rng::split_seed;

/// Closed-form step of the greedy forward update.
///
/// Minimizes `||X - ((1 - alpha) X_prev + alpha C)||_F^2`:
/// `alpha = Tr[(X - X_prev)^T (C - X_prev)] / ||C - X_prev||_F^2`.
/// When `C == X_prev` every alpha is optimal and 0 is returned.
pub fn optimal_alpha(x: &DMatrix<f64>, x_prev: &DMatrix<f64>, candidate: &DMatrix<f64>) -> Result<f64> {
    check_dim("X_prev rows", x.nrows(), x_prev.nrows())?;
    check_dim("X_prev cols", x.ncols(), x_prev.ncols())?;
    check_dim("candidate rows", x.nrows(), candidate.nrows())?;
    check_dim("candidate cols", x.ncols(), candidate.ncols())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((xv, pv), cv) in x.iter().zip(x_prev.iter()).zip(candidate.iter()) {
        let d = cv - pv;
        num += (xv - pv) * d;
        den += d * d;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// `beta_l = alpha_l prod_{t>l} (1 - alpha_t)`.
pub fn betas_from_alphas(alphas: &DVector<f64>) -> DVector<f64> {
    let l = alphas.len();
    let mut betas = DVector::zeros(l);
    let mut tail = 1.0;
    for i in (0..l).rev() {
        betas[i] = alphas[i] * tail;
        tail *= 1.0 - alphas[i];
    }
    betas
}

/// How each boosting round builds its dictionary from the current masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostBuilder {
    /// K samples drawn by mass without replacement.
    BoostEx,
    /// Normalized weighted K-Means|| centers with `q` candidates per round over `s` rounds.
    BoostKm { q: usize, s: usize },
}

impl BoostBuilder {
    /// BoostKM with `q = 2K`, `s = 5`.
    pub fn boostkm_default(k: usize) -> Self {
        let c = KMeansParallelConfig::new(k);
        BoostBuilder::BoostKm { q: c.q, s: c.s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    pub k: usize,
    pub rounds: usize,
    pub coder: Coder,
    pub builder: BoostBuilder,
    pub seed: u64,
    /// Training stops once `||X - X_l||_F / ||X||_F` falls below this.
    pub early_stop: f64,
}

impl BoostConfig {
    pub fn new(k: usize, rounds: usize, lambda: f64, builder: BoostBuilder, seed: u64) -> Self {
        Self {
            k,
            rounds,
            coder: Coder::Lasso { lambda },
            builder,
            seed,
            early_stop: 1e-10,
        }
    }
}

/// What happened in one boosting round.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostRoundTrace {
    pub round: usize,
    pub alpha: f64,
    /// `e_l(i) = ||x_i - D_l a_{l,i}||^2` of this round's model alone.
    pub per_sample_error: DVector<f64>,
    /// Masses for the next round, proportional to `per_sample_error`.
    pub masses_next: DVector<f64>,
    /// `||X - X_l||_F` of the cumulative approximation.
    pub cumulative_error: f64,
}

fn build_dictionary(masses: &TrainingSet, config: &BoostConfig, seed: u64) -> Result<Dictionary> {
    match config.builder {
        BoostBuilder::BoostEx => dictionaries::draw_boostex_dictionary(masses, config.k, seed),
        BoostBuilder::BoostKm { q, s } => {
            let km = KMeansParallelConfig {
                q,
                s,
                ..KMeansParallelConfig::new(config.k)
            };
            let state = weighted_kmeans_parallel_init(masses, &km, seed)?;
            dictionary_from_clusters(&state, masses)
        }
    }
}

/// Boosted ensemble training.
///
/// Round `l` builds `D_l` from masses `p_l` (uniform in round 1), codes the
/// training set (`Phi X` against `Phi D_l` when an operator is given), and
/// folds the clean-space approximation `D_l A_l` into the cumulative model
/// with the closed-form alpha. Round 1 has no previous model and takes
/// `alpha_1 = 1`, so the final betas sum to one. The next masses are the
/// round's per-sample squared errors, normalized.
///
/// Training ends early (fewer than `rounds` models) when the cumulative fit
/// is exact to `early_stop` or a round fits every sample exactly.
pub fn train_boosted(
    train: &TrainingSet,
    config: &BoostConfig,
    operator: Option<&DegradationOperator>,
) -> Result<(EnsembleModel, Vec<BoostRoundTrace>)> {
    if config.rounds == 0 || config.k == 0 {
        return Err(Error::invalid("boosting needs K >= 1 and at least one round"));
    }
    if let BoostBuilder::BoostKm { q, s } = config.builder {
        if q * s <= config.k {
            return Err(Error::invalid("K-Means|| needs s * q > K"));
        }
    }
    let x = train.samples();
    let t = train.len();
    let observed = match operator {
        Some(op) => op.apply_columns(x)?,
        None => x.clone(),
    };
    let x_norm = linalg::frobenius_sq(x);

    let mut masses = DVector::from_element(t, 1.0 / t as f64);
    let mut cumulative = DMatrix::zeros(x.nrows(), t);
    let mut dicts = Vec::with_capacity(config.rounds);
    let mut alphas = Vec::with_capacity(config.rounds);
    let mut traces = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let weighted = train.reweighted(masses.clone())?;
        let dict = build_dictionary(&weighted, config, split_seed(config.seed, round as u64))?;
        let codes = code_columns(&dict, &observed, config.coder, operator)?;
        let approx = dict.atoms() * codes;

        let alpha = if round == 0 {
            1.0
        } else {
            optimal_alpha(x, &cumulative, &approx)?
        };
        let next = &cumulative * (1.0 - alpha) + &approx * alpha;
        let err = math::sqrt(linalg::frobenius_sq(&(x - &next)));
        if let Some(prev) = traces.last().map(|tr: &BoostRoundTrace| tr.cumulative_error) {
            debug_assert!(err <= prev + 1e-9 * (1.0 + prev), "cumulative error rose: {prev} -> {err}");
        }
        cumulative = next;

        let per_sample: DVector<f64> =
            DVector::from_iterator(t, (x - &approx).column_iter().map(|c| c.norm_squared()));
        let total: f64 = per_sample.iter().sum();
        let perfect = !(total > 0.0);
        masses = if perfect {
            DVector::from_element(t, 1.0 / t as f64)
        } else {
            &per_sample / total
        };

        dicts.push(dict);
        alphas.push(alpha);
        traces.push(BoostRoundTrace {
            round,
            alpha,
            per_sample_error: per_sample,
            masses_next: masses.clone(),
            cumulative_error: err,
        });

        let relative = if x_norm > 0.0 { err / math::sqrt(x_norm) } else { 0.0 };
        if perfect || relative < config.early_stop {
            break;
        }
    }

    let alphas = DVector::from_vec(alphas);
    let betas = betas_from_alphas(&alphas);
    let kind = match config.builder {
        BoostBuilder::BoostEx => ModelKind::BoostEx,
        BoostBuilder::BoostKm { .. } => ModelKind::BoostKm,
    };
    let lambda_train = match config.coder {
        Coder::Lasso { lambda } => lambda,
        Coder::OneSparse => 0.0,
    };
    let model = EnsembleModel::new(
        kind,
        dicts,
        WeightVector::new(betas, ConstraintCase::SumToOne)?,
        Some(alphas),
        lambda_train,
        operator.map(|op| op.descriptor()),
    )?;
    Ok((model, traces))
}

/// Random-example averaging: `l` example dictionaries of `k` atoms, each
/// drawn with seed `split_seed(seed, index)`, weighted `1/l`.
pub fn train_randexav(train: &TrainingSet, k: usize, l: usize, lambda_train: f64, seed: u64) -> Result<EnsembleModel> {
    if l == 0 {
        return Err(Error::invalid("RandExAv needs at least one model"));
    }
    let dicts = (0..l)
        .map(|i| dictionaries::draw_random_example_dictionary(train, k, split_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(ModelKind::RandExAv, dicts, WeightVector::uniform(l), None, lambda_train, None)
}
