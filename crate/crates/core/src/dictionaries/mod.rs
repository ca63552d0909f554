//! Weak and baseline dictionaries.
//!
//! * [`learn_alt_opt`]: the alternating-minimization baseline (code, then
//!   update atoms, repeat).
//! * [`draw_random_example_dictionary`] / [`draw_boostex_dictionary`]:
//!   normalized training samples chosen uniformly or by probability mass.
//! * [`kmeans::weighted_kmeans_parallel_init`] + [`dictionary_from_clusters`]:
//!   normalized weighted K-Means|| centers.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng;
use crate::sparse_coding::{self, LassoConfig, LassoSolver};

pub mod kmeans;

pub use kmeans::{weighted_kmeans_parallel_init, ClusterState, KMeansParallelConfig};

/// Tolerance of the unit-norm atom invariant.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomSource {
    Learned,
    ExampleSubset,
    KmeansCenters,
}

/// Column-normalized atom matrix (`M x K`).
///
/// Example-subset dictionaries remember which training sample each atom
/// came from (`origin`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    source: AtomSource,
    origin: Option<Vec<usize>>,
}

impl Dictionary {
    /// Normalizes the columns of `atoms`. Zero columns are rejected.
    pub fn new(atoms: DMatrix<f64>, source: AtomSource) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::invalid("dictionary needs at least one atom of positive length"));
        }
        if !linalg::all_finite(&atoms) {
            return Err(Error::invalid("dictionary has non-finite entries"));
        }
        Ok(Self {
            atoms: linalg::normalize_columns(&atoms)?,
            source,
            origin: None,
        })
    }

    /// Wraps atoms that are already unit norm (checked to within [`UNIT_NORM_TOL`]).
    pub fn from_unit_atoms(atoms: DMatrix<f64>, source: AtomSource) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::invalid("dictionary needs at least one atom of positive length"));
        }
        for (j, c) in atoms.column_iter().enumerate() {
            if (c.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(alloc::format!("atom {j} is not unit norm")));
            }
        }
        Ok(Self {
            atoms,
            source,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: Vec<usize>) -> Result<Self> {
        check_dim("dictionary origin", self.atoms.ncols(), origin.len())?;
        self.origin = Some(origin);
        Ok(self)
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn source(&self) -> AtomSource {
        self.source
    }

    /// Training-sample index of each atom, for example-subset dictionaries.
    pub fn origin(&self) -> Option<&[usize]> {
        self.origin.as_deref()
    }

    /// Signal dimension `M`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `K`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }
}

/// Training samples (columns) with a probability mass per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    samples: DMatrix<f64>,
    masses: DVector<f64>,
}

impl TrainingSet {
    pub fn uniform(samples: DMatrix<f64>) -> Result<Self> {
        let t = samples.ncols();
        Self::with_masses(samples, DVector::from_element(t, 1.0))
    }

    /// Masses are rescaled to sum to one; they must be non-negative with a positive sum.
    pub fn with_masses(samples: DMatrix<f64>, masses: DVector<f64>) -> Result<Self> {
        if samples.ncols() == 0 || samples.nrows() == 0 {
            return Err(Error::invalid("training set is empty"));
        }
        check_dim("training masses", samples.ncols(), masses.len())?;
        if !linalg::all_finite(&samples) {
            return Err(Error::invalid("training samples have non-finite entries"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("masses must be finite and non-negative"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("masses must have a positive sum"));
        }
        Ok(Self {
            samples,
            masses: masses / total,
        })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn masses(&self) -> &DVector<f64> {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    /// Same samples under new masses.
    pub fn reweighted(&self, masses: DVector<f64>) -> Result<Self> {
        Self::with_masses(self.samples.clone(), masses)
    }
}

fn example_dictionary(train: &TrainingSet, chosen: Vec<usize>) -> Result<Dictionary> {
    let atoms = train.samples.select_columns(&chosen);
    Dictionary::new(atoms, AtomSource::ExampleSubset)?.with_origin(chosen)
}

fn nonzero_indices(train: &TrainingSet) -> Vec<usize> {
    (0..train.len())
        .filter(|&i| train.samples.column(i).norm() > 0.0)
        .collect()
}

/// `k` distinct samples chosen uniformly without replacement, normalized.
///
/// Zero samples cannot become atoms and are never drawn.
pub fn draw_random_example_dictionary(train: &TrainingSet, k: usize, seed: u64) -> Result<Dictionary> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let pool = nonzero_indices(train);
    if pool.len() < k {
        return Err(Error::NotEnoughSamples {
            needed: k,
            available: pool.len(),
        });
    }
    let mut r = rng::seeded(seed);
    let chosen: Vec<usize> = rand::seq::index::sample(&mut r, pool.len(), k)
        .into_iter()
        .map(|p| pool[p])
        .collect();
    example_dictionary(train, chosen)
}

/// `k` distinct samples, each draw proportional to the masses not yet drawn.
///
/// When fewer than `k` samples carry mass, the rest are drawn uniformly
/// from the massless nonzero samples.
/// Uniform masses take the same path as [`draw_random_example_dictionary`].
pub fn draw_boostex_dictionary(train: &TrainingSet, k: usize, seed: u64) -> Result<Dictionary> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let weights: Vec<f64> = (0..train.len())
        .map(|i| {
            if train.samples.column(i).norm() > 0.0 {
                train.masses[i]
            } else {
                0.0
            }
        })
        .collect();
    let positive: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
    let uniform = !positive.is_empty()
        && positive.iter().all(|w| *w == positive[0])
        && positive.len() == nonzero_indices(train).len();
    if uniform {
        return draw_random_example_dictionary(train, k, seed);
    }
    let mut r = rng::seeded(seed);
    let mut chosen = rng::weighted_without_replacement(&mut r, &weights, k.min(positive.len()))?;
    if chosen.len() < k {
        let rest: Vec<usize> = nonzero_indices(train)
            .into_iter()
            .filter(|i| weights[*i] == 0.0)
            .collect();
        let needed = k - chosen.len();
        if rest.len() < needed {
            return Err(Error::NotEnoughSamples {
                needed: k,
                available: chosen.len() + rest.len(),
            });
        }
        chosen.extend(rand::seq::index::sample(&mut r, rest.len(), needed).into_iter().map(|p| rest[p]));
    }
    example_dictionary(train, chosen)
}

/// Atoms are the normalized cluster centers.
///
/// A zero center is replaced by the highest-mass sample not already used
/// as a replacement (normalized).
pub fn dictionary_from_clusters(state: &ClusterState, train: &TrainingSet) -> Result<Dictionary> {
    check_dim("cluster center dimension", train.dim(), state.centers.nrows())?;
    let mut atoms = state.centers.clone();
    let mut order: Vec<usize> = nonzero_indices(train);
    order.sort_by(|&a, &b| train.masses[b].total_cmp(&train.masses[a]).then(a.cmp(&b)));
    let mut fallback = order.into_iter();
    for j in 0..atoms.ncols() {
        if atoms.column(j).norm() > 0.0 {
            continue;
        }
        let i = fallback
            .next()
            .ok_or(Error::NotEnoughSamples { needed: j + 1, available: 0 })?;
        atoms.set_column(j, &train.samples.column(i));
    }
    Dictionary::new(atoms, AtomSource::KmeansCenters)
}

/// Mass-weighted quadratic cost `sum_i p_i ||x_i - D a_i||^2`.
pub fn weighted_fit_cost(train: &TrainingSet, atoms: &DMatrix<f64>, codes: &DMatrix<f64>) -> f64 {
    let r = train.samples() - atoms * codes;
    r.column_iter()
        .zip(train.masses.iter())
        .map(|(c, p)| p * c.norm_squared())
        .sum()
}

/// Empirical cost `sum_i p_i (||x_i - D a_i||^2 + lambda ||a_i||_1)`.
pub fn empirical_cost(train: &TrainingSet, atoms: &DMatrix<f64>, codes: &DMatrix<f64>, lambda: f64) -> f64 {
    let l1: f64 = codes
        .column_iter()
        .zip(train.masses.iter())
        .map(|(c, p)| p * c.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    weighted_fit_cost(train, atoms, codes) + lambda * l1
}

const UPDATE_SWEEPS: usize = 20;

/// Atom update with codes fixed.
///
/// Block-coordinate least squares on each atom, projected onto the unit
/// ball (so the weighted quadratic cost never increases), then every atom
/// is rescaled to unit norm. Atoms no sample uses are kept as they were.
pub fn dictionary_update(train: &TrainingSet, codes: &DMatrix<f64>, current: &Dictionary) -> Result<Dictionary> {
    check_dim("code count", train.len(), codes.ncols())?;
    check_dim("code length", current.len(), codes.nrows())?;
    check_dim("sample dimension", train.dim(), current.dim())?;
    let mut weighted_codes = codes.clone();
    for (i, mut c) in weighted_codes.column_iter_mut().enumerate() {
        c *= train.masses[i];
    }
    let e = codes * weighted_codes.transpose(); // A W A^T
    let b = train.samples() * weighted_codes.transpose(); // X W A^T
    let mut d = current.atoms().clone();
    for _ in 0..UPDATE_SWEEPS {
        let mut change = 0.0_f64;
        for j in 0..d.ncols() {
            let ejj = e[(j, j)];
            if !(ejj > 0.0) {
                continue;
            }
            let de = &d * e.column(j);
            let mut u = d.column(j) + (b.column(j) - de) / ejj;
            let n = u.norm();
            if n > 1.0 {
                u /= n;
            }
            change = change.max((&u - d.column(j)).amax());
            d.set_column(j, &u);
        }
        if change < 1e-12 {
            break;
        }
    }
    for j in 0..d.ncols() {
        let n = d.column(j).norm();
        if n > 0.0 {
            let c = d.column(j) / n;
            d.set_column(j, &c);
        } else {
            d.set_column(j, &current.atoms().column(j));
        }
    }
    Dictionary::new(d, AtomSource::Learned)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltOptConfig {
    pub k: usize,
    pub lambda: f64,
    pub iterations: usize,
    /// Lloyd iterations refining the K-Means++ initialization.
    pub init_lloyd_iters: usize,
    pub seed: u64,
}

impl AltOptConfig {
    pub fn new(k: usize, lambda: f64) -> Self {
        Self {
            k,
            lambda,
            iterations: 100,
            init_lloyd_iters: 10,
            seed: 0,
        }
    }
}

/// Alternating minimization of the empirical cost.
///
/// Starts from normalized (unweighted) K-Means++ centers refined by Lloyd,
/// then alternates lasso coding and [`dictionary_update`]. Returns the
/// dictionary and the empirical cost of each alternation, which never
/// increases.
pub fn learn_alt_opt(train: &TrainingSet, config: &AltOptConfig) -> Result<(Dictionary, Vec<f64>)> {
    let k = config.k;
    if k == 0 || config.iterations == 0 {
        return Err(Error::invalid("Alt-Opt needs K >= 1 and at least one iteration"));
    }
    if k > train.len() {
        return Err(Error::NotEnoughSamples {
            needed: k,
            available: train.len(),
        });
    }
    let uniform = alloc::vec![1.0; train.len()];
    let mut r = rng::seeded(config.seed);
    let seeds = kmeans::kmeans_pp_seed(train.samples(), &uniform, k, &mut r);
    let (centers, assignments, _) = kmeans::weighted_lloyd(train.samples(), &uniform, seeds, config.init_lloyd_iters);
    let state = ClusterState::new(train, centers, assignments);
    let mut dict = dictionary_from_clusters(&state, train)?;
    dict = Dictionary::new(dict.atoms().clone(), AtomSource::Learned)?;

    let mut history = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let solver = LassoSolver::new(dict.atoms().clone(), config.lambda, LassoConfig::default())?;
        let codes = solver.solve_columns(train.samples())?;
        let cost = empirical_cost(train, dict.atoms(), &codes, config.lambda);
        if let Some(&prev) = history.last() {
            debug_assert!(cost <= prev + 1e-9 * (1.0 + prev), "Alt-Opt cost increased at {it}: {prev} -> {cost}");
        }
        history.push(cost);
        if it + 1 < config.iterations {
            dict = dictionary_update(train, &codes, &dict)?;
        }
    }
    Ok((dict, history))
}

/// Per-sample lasso objectives `h(x_i, D)`.
pub fn coding_objectives(samples: &DMatrix<f64>, atoms: &DMatrix<f64>, codes: &DMatrix<f64>, lambda: f64) -> Vec<f64> {
    (0..samples.ncols())
        .map(|i| {
            sparse_coding::objective(
                &samples.column(i).into_owned(),
                atoms,
                &codes.column(i).into_owned(),
                lambda,
            )
        })
        .collect()
}
