//! Oracle ensemble weights: `min ||x - C beta||_2` under four constraint sets.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Per-model approximations `c_l` stacked as columns, and the target they approximate.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationStack {
    columns: DMatrix<f64>,
    target: DVector<f64>,
}

impl ApproximationStack {
    pub fn new(columns: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        if columns.ncols() == 0 {
            return Err(Error::invalid("approximation stack needs at least one model"));
        }
        check_dim("stack target", columns.nrows(), target.len())?;
        if !linalg::all_finite(&columns) || !target.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("approximation stack has non-finite entries"));
        }
        Ok(Self { columns, target })
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn models(&self) -> usize {
        self.columns.ncols()
    }

    /// Residual norm of every individual model, `||x - c_l||`.
    pub fn individual_residual_norms(&self) -> Vec<f64> {
        self.columns
            .column_iter()
            .map(|c| (&self.target - c).norm())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintCase {
    Unconstrained,
    NonNegative,
    SumToOne,
    Simplex,
}

impl ConstraintCase {
    pub const ALL: [ConstraintCase; 4] = [
        ConstraintCase::Unconstrained,
        ConstraintCase::NonNegative,
        ConstraintCase::SumToOne,
        ConstraintCase::Simplex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintCase::Unconstrained => "unconstrained",
            ConstraintCase::NonNegative => "nonneg",
            ConstraintCase::SumToOne => "sum_one",
            ConstraintCase::Simplex => "simplex",
        }
    }
}

/// Ensemble weights tagged with the constraint set they satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    betas: DVector<f64>,
    case: ConstraintCase,
}

impl WeightVector {
    /// Checks the case invariants: `beta >= -1e-12` and/or `sum beta = 1 +- 1e-9`.
    pub fn new(betas: DVector<f64>, case: ConstraintCase) -> Result<Self> {
        if betas.is_empty() || !betas.iter().all(|b| b.is_finite()) {
            return Err(Error::invalid("weights must be a non-empty finite vector"));
        }
        let nonneg = betas.iter().all(|b| *b >= -1e-12);
        let sums = (betas.sum() - 1.0).abs() <= 1e-9;
        let ok = match case {
            ConstraintCase::Unconstrained => true,
            ConstraintCase::NonNegative => nonneg,
            ConstraintCase::SumToOne => sums,
            ConstraintCase::Simplex => nonneg && sums,
        };
        if !ok {
            return Err(Error::invalid(alloc::format!(
                "weights violate the {} constraint",
                case.name()
            )));
        }
        Ok(Self { betas, case })
    }

    /// `1/L` for every model.
    pub fn uniform(models: usize) -> Self {
        Self {
            betas: DVector::from_element(models, 1.0 / models as f64),
            case: ConstraintCase::Simplex,
        }
    }

    pub fn betas(&self) -> &DVector<f64> {
        &self.betas
    }

    pub fn case(&self) -> ConstraintCase {
        self.case
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// `x - C beta`.
pub fn residual(stack: &ApproximationStack, weights: &WeightVector) -> Result<DVector<f64>> {
    check_dim("weight count", stack.models(), weights.len())?;
    Ok(&stack.target - &stack.columns * &weights.betas)
}

const SIMPLEX_ITERS: usize = 10_000;
const SIMPLEX_TOL: f64 = 1e-10;

/// Optimal weights for one constraint case.
///
/// * unconstrained: minimum-norm least squares (SVD);
/// * non-negative: Lawson-Hanson active set;
/// * sum-to-one: eliminate the last weight, least squares on the differences;
/// * simplex: projected gradient from the best single model, then an exact
///   solve on the final support when that stays feasible and is no worse.
///
/// When a less constrained optimum already satisfies a stricter case it is
/// returned as is, so nested cases tie exactly.
pub fn solve_weights(stack: &ApproximationStack, case: ConstraintCase) -> Result<WeightVector> {
    let c = &stack.columns;
    let x = &stack.target;
    let betas = match case {
        ConstraintCase::Unconstrained => linalg::lstsq(c, x),
        ConstraintCase::NonNegative => {
            let u = linalg::lstsq(c, x);
            if u.iter().all(|b| *b >= 0.0) {
                u
            } else {
                nnls(c, x)
            }
        }
        ConstraintCase::SumToOne => sum_to_one(c, x),
        ConstraintCase::Simplex => {
            let a = sum_to_one(c, x);
            if a.iter().all(|b| *b >= 0.0) {
                a
            } else {
                let n = nnls(c, x);
                if (n.sum() - 1.0).abs() <= 1e-12 {
                    n
                } else {
                    simplex(c, x)
                }
            }
        }
    };
    let betas = match case {
        ConstraintCase::NonNegative | ConstraintCase::Simplex => betas.map(|b| b.max(0.0)),
        _ => betas,
    };
    WeightVector::new(betas, case)
}

fn sum_to_one(c: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let l = c.ncols();
    if l == 1 {
        return DVector::from_element(1, 1.0);
    }
    let last = c.column(l - 1);
    let diffs = DMatrix::from_fn(c.nrows(), l - 1, |i, j| c[(i, j)] - last[i]);
    let rhs = x - last;
    let head = linalg::lstsq(&diffs, &rhs);
    let mut betas = DVector::zeros(l);
    betas.rows_mut(0, l - 1).copy_from(&head);
    betas[l - 1] = 1.0 - head.sum();
    betas
}

/// Lawson-Hanson non-negative least squares.
pub fn nnls(c: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let l = c.ncols();
    let mut beta = DVector::zeros(l);
    let mut passive = alloc::vec![false; l];
    let scale = c.amax().max(1.0) * x.amax().max(1.0);
    let tol = 1e-12 * scale * (c.nrows().max(l) as f64);
    for _ in 0..(3 * l + 10) {
        let w = c.tr_mul(&(x - c * &beta));
        let pick = (0..l)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = pick else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..l).filter(|&i| passive[i]).collect();
            let sub = linalg::lstsq(&c.select_columns(&idx), x);
            if sub.iter().all(|v| *v > 0.0) {
                beta.fill(0.0);
                for (p, &i) in idx.iter().enumerate() {
                    beta[i] = sub[p];
                }
                break;
            }
            let mut step = f64::INFINITY;
            for (p, &i) in idx.iter().enumerate() {
                if sub[p] <= 0.0 {
                    let denom = beta[i] - sub[p];
                    if denom > 0.0 {
                        step = step.min(beta[i] / denom);
                    }
                }
            }
            if !step.is_finite() {
                step = 0.0;
            }
            for (p, &i) in idx.iter().enumerate() {
                beta[i] += step * (sub[p] - beta[i]);
            }
            for &i in &idx {
                if beta[i] <= tol * 1e-3 {
                    beta[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    beta
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn simplex(c: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let l = c.ncols();
    let norms: Vec<f64> = c.column_iter().map(|col| (x - col).norm()).collect();
    let best = (0..l).min_by(|&a, &b| norms[a].total_cmp(&norms[b])).unwrap_or(0);
    let mut beta = DVector::zeros(l);
    beta[best] = 1.0;
    let lip = 2.0 * linalg::spectral_norm_sq(c);
    if lip > 0.0 {
        let step = 1.0 / lip;
        for _ in 0..SIMPLEX_ITERS {
            let g = c.tr_mul(&(c * &beta - x)) * 2.0;
            let next = project_simplex(&(&beta - g * step));
            let delta = (&next - &beta).amax();
            beta = next;
            if delta < SIMPLEX_TOL {
                break;
            }
        }
    }
    // exact solve on the support when it stays inside the simplex
    let support: Vec<usize> = (0..l).filter(|&j| beta[j] > 0.0).collect();
    if !support.is_empty() {
        let sub = sum_to_one(&c.select_columns(&support), x);
        if sub.iter().all(|b| *b >= 0.0) {
            let mut cand = DVector::zeros(l);
            for (p, &j) in support.iter().enumerate() {
                cand[j] = sub[p];
            }
            if (x - c * &cand).norm() <= (x - c * &beta).norm() {
                beta = cand;
            }
        }
    }
    beta
}
