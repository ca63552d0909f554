//! l1-penalized sparse coding.
//!
//! Codes minimize `||x - D a||^2 + lambda ||a||_1` (no factor-of-two
//! rescaling of `lambda`). With a degradation operator the observation `z`
//! is coded against the effective dictionary `Phi D`, whose columns are not
//! renormalized.
//!
//! [`LassoSolver`] runs monotone FISTA (soft-thresholding with momentum and
//! step `1 / (2 sigma_max^2)`), certifies the result with the KKT residual,
//! and, once the support settles, solves the sign-fixed reduced problem in
//! closed form, accepting it only if it passes the same certificate. After
//! `finish_after` iterations it also tries a feature-sign active-set search
//! from zero; the same search, warm-started at the last iterate, is the
//! fallback when the iteration budget runs out.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dictionaries::Dictionary;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::math;
use crate::operator::DegradationOperator;

/// Which penalty produced a code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    L1(f64),
    OneSparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: DVector<f64>,
    pub penalty: Penalty,
    /// `||x - D a||^2 + lambda ||a||_1` (the penalty term is absent for 1-sparse codes).
    pub objective: f64,
}

impl SparseCode {
    pub fn lambda(&self) -> Option<f64> {
        match self.penalty {
            Penalty::L1(l) => Some(l),
            Penalty::OneSparse => None,
        }
    }
}

/// One coding problem: `min_a ||z - Phi D a||^2 + lambda ||a||_1`.
#[derive(Debug, Clone, Copy)]
pub struct CodingProblem<'a> {
    pub target: &'a DVector<f64>,
    pub dictionary: &'a Dictionary,
    pub lambda: f64,
    pub operator: Option<&'a DegradationOperator>,
}

impl<'a> CodingProblem<'a> {
    pub fn new(target: &'a DVector<f64>, dictionary: &'a Dictionary, lambda: f64) -> Self {
        Self {
            target,
            dictionary,
            lambda,
            operator: None,
        }
    }

    pub fn with_operator(mut self, operator: &'a DegradationOperator) -> Self {
        self.operator = Some(operator);
        self
    }

    fn effective_atoms(&self) -> Result<DMatrix<f64>> {
        effective_atoms(self.dictionary, self.operator)
    }
}

/// `Phi D` when an operator is present, `D` otherwise.
pub fn effective_atoms(
    dictionary: &Dictionary,
    operator: Option<&DegradationOperator>,
) -> Result<DMatrix<f64>> {
    match operator {
        Some(op) => op.apply_columns(dictionary.atoms()),
        None => Ok(dictionary.atoms().clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub max_iter: usize,
    /// KKT residual at which the iteration stops.
    pub tol: f64,
    /// Iteration after which an active-set search from zero is tried.
    pub finish_after: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            finish_after: 10,
        }
    }
}

/// `||x - A a||^2 + lambda ||a||_1`, computed from the residual.
pub fn objective(target: &DVector<f64>, atoms: &DMatrix<f64>, coefficients: &DVector<f64>, lambda: f64) -> f64 {
    let r = target - atoms * coefficients;
    r.norm_squared() + lambda * linalg::l1_norm(coefficients)
}

/// Max stationarity violation of `coefficients` for the lasso on `atoms`.
///
/// With `g = 2 A^T (x - A a)`, optimality requires `|g_j| <= lambda` where
/// `a_j = 0` and `g_j = lambda sign(a_j)` elsewhere. Coordinate `excluded`
/// (if any) is pinned at zero and ignored.
pub fn kkt_violation(
    target: &DVector<f64>,
    atoms: &DMatrix<f64>,
    coefficients: &DVector<f64>,
    lambda: f64,
    excluded: Option<usize>,
) -> f64 {
    let r = target - atoms * coefficients;
    let g = atoms.tr_mul(&r) * 2.0;
    violation_from_gradient(&g, coefficients, lambda, excluded)
}

fn violation_from_gradient(
    g: &DVector<f64>,
    a: &DVector<f64>,
    lambda: f64,
    excluded: Option<usize>,
) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..a.len() {
        if Some(j) == excluded {
            continue;
        }
        let v = if a[j] == 0.0 {
            (g[j].abs() - lambda).max(0.0)
        } else {
            (g[j] - lambda * math::signum(a[j])).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// KKT residual of `code` for `problem` (operator-composed when present).
pub fn kkt_residual(problem: &CodingProblem<'_>, code: &SparseCode) -> Result<f64> {
    let atoms = problem.effective_atoms()?;
    check_dim("coding target", atoms.nrows(), problem.target.len())?;
    check_dim("code length", atoms.ncols(), code.coefficients.len())?;
    Ok(kkt_violation(
        problem.target,
        &atoms,
        &code.coefficients,
        problem.lambda,
        None,
    ))
}

/// Solves one coding problem from scratch.
pub fn solve_lasso(problem: &CodingProblem<'_>) -> Result<SparseCode> {
    if let Some(op) = problem.operator {
        check_dim("operator output vs target", op.out_dim(), problem.target.len())?;
    }
    let solver = LassoSolver::new(problem.effective_atoms()?, problem.lambda, LassoConfig::default())?;
    solver.solve(problem.target)
}

/// Codes every column of `samples`; column `i` of the result is the code of sample `i`.
pub fn code_batch(
    samples: &DMatrix<f64>,
    dictionary: &Dictionary,
    lambda: f64,
    operator: Option<&DegradationOperator>,
) -> Result<DMatrix<f64>> {
    let solver = LassoSolver::new(effective_atoms(dictionary, operator)?, lambda, LassoConfig::default())?;
    solver.solve_columns(samples)
}

/// Index and value of the best single-atom least-squares fit.
///
/// Atoms need not be unit norm: the score is `|<d_j, x>| / ||d_j||` and the
/// value `<d_j, x> / ||d_j||^2`. Ties go to the lowest index; zero atoms are skipped.
pub fn best_atom(atoms: &DMatrix<f64>, inv_norms: &[f64], x: &DVector<f64>) -> (usize, f64) {
    let mut best = (0usize, 0.0f64, -1.0f64);
    for (j, col) in atoms.column_iter().enumerate() {
        let inv = inv_norms[j];
        if inv == 0.0 {
            continue;
        }
        let c = col.dot(x);
        let score = c.abs() * inv;
        if score > best.2 {
            best = (j, c * inv * inv, score);
        }
    }
    if best.2 <= 0.0 {
        (0, 0.0)
    } else {
        (best.0, best.1)
    }
}

/// [`best_atom`] for every column of `targets`, through one `D^T X` product.
pub fn best_atoms(atoms: &DMatrix<f64>, inv_norms: &[f64], targets: &DMatrix<f64>) -> Vec<(usize, f64)> {
    let corr = atoms.tr_mul(targets);
    corr.column_iter()
        .map(|c| {
            let mut best = (0usize, 0.0f64, -1.0f64);
            for (j, v) in c.iter().enumerate() {
                let inv = inv_norms[j];
                if inv == 0.0 {
                    continue;
                }
                let score = v.abs() * inv;
                if score > best.2 {
                    best = (j, v * inv * inv, score);
                }
            }
            if best.2 <= 0.0 {
                (0, 0.0)
            } else {
                (best.0, best.1)
            }
        })
        .collect()
}

/// Inverse column norms (zero for zero columns), for [`best_atom`].
pub fn inverse_norms(atoms: &DMatrix<f64>) -> Vec<f64> {
    atoms
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

/// 1-sparse code: the single unit-norm atom most correlated with the sample.
pub fn code_one_sparse(sample: &DVector<f64>, dictionary: &Dictionary) -> Result<SparseCode> {
    let atoms = dictionary.atoms();
    check_dim("sample length", atoms.nrows(), sample.len())?;
    let ones = alloc::vec![1.0; atoms.ncols()];
    let (j, v) = best_atom(atoms, &ones, sample);
    let mut coefficients = DVector::zeros(atoms.ncols());
    coefficients[j] = v;
    let objective = (sample - atoms.column(j) * v).norm_squared();
    Ok(SparseCode {
        coefficients,
        penalty: Penalty::OneSparse,
        objective,
    })
}

// Gram mode tracks G a (K^2 per iteration), direct mode tracks A a (2 N K).
enum Products {
    Gram(DMatrix<f64>),
    Direct,
}

// Largest K for which a Gram matrix is kept beside the direct iteration.
const SIDE_GRAM_MAX: usize = 2048;

/// Prepared lasso solver for one effective dictionary and penalty.
pub struct LassoSolver {
    atoms: DMatrix<f64>,
    products: Products,
    // Gram matrix for the active-set search when the iteration runs without one
    side_gram: Option<DMatrix<f64>>,
    step: f64,
    lambda: f64,
    config: LassoConfig,
}

impl LassoSolver {
    pub fn new(atoms: DMatrix<f64>, lambda: f64, config: LassoConfig) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda must be positive and finite"));
        }
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::invalid("empty dictionary"));
        }
        if !linalg::all_finite(&atoms) {
            return Err(Error::invalid("dictionary has non-finite entries"));
        }
        let (n, k) = atoms.shape();
        let products = if k <= 2 * n {
            Products::Gram(atoms.tr_mul(&atoms))
        } else {
            Products::Direct
        };
        let side_gram = match products {
            Products::Direct if k <= SIDE_GRAM_MAX => Some(atoms.tr_mul(&atoms)),
            _ => None,
        };
        let lip = 2.0 * linalg::spectral_norm_sq(&atoms);
        let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
        Ok(Self {
            atoms,
            products,
            side_gram,
            step,
            lambda,
            config,
        })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solve(&self, target: &DVector<f64>) -> Result<SparseCode> {
        self.run(target, None, None)
    }

    /// Solves with coordinate `excluded` pinned at zero.
    pub fn solve_excluding(&self, target: &DVector<f64>, excluded: Option<usize>) -> Result<SparseCode> {
        self.run(target, excluded, None)
    }

    /// Also returns the objective value after every iteration.
    pub fn solve_traced(&self, target: &DVector<f64>) -> Result<(SparseCode, Vec<f64>)> {
        let mut trace = Vec::new();
        let code = self.run(target, None, Some(&mut trace))?;
        Ok((code, trace))
    }

    /// Codes every column; errors carry the failing column index.
    pub fn solve_columns(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("sample length", self.atoms.nrows(), targets.nrows())?;
        let k = self.atoms.ncols();
        let solve_one = |i: usize| -> Result<DVector<f64>> {
            let t = targets.column(i).into_owned();
            self.solve(&t).map(|c| c.coefficients).map_err(|e| e.at_sample(i))
        };
        let cols = crate::par::map_indices(targets.ncols(), solve_one);
        let mut out = DMatrix::zeros(k, targets.ncols());
        for (i, c) in cols.into_iter().enumerate() {
            out.set_column(i, &c?);
        }
        Ok(out)
    }

    fn product(&self, a: &DVector<f64>) -> DVector<f64> {
        match &self.products {
            Products::Gram(g) => g * a,
            Products::Direct => &self.atoms * a,
        }
    }

    // Smooth part of the objective given the tracked product of `a`.
    fn smooth(&self, a: &DVector<f64>, pa: &DVector<f64>, target: &DVector<f64>, b: &DVector<f64>, tt: f64) -> f64 {
        match self.products {
            Products::Gram(_) => (a.dot(pa) - 2.0 * b.dot(a) + tt).max(0.0),
            Products::Direct => (target - pa).norm_squared(),
        }
    }

    // 2 A^T (x - A a).
    fn neg_gradient(&self, pa: &DVector<f64>, target: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        match self.products {
            Products::Gram(_) => (b - pa) * 2.0,
            Products::Direct => self.atoms.tr_mul(&(target - pa)) * 2.0,
        }
    }

    fn run(
        &self,
        target: &DVector<f64>,
        excluded: Option<usize>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<SparseCode> {
        check_dim("coding target", self.atoms.nrows(), target.len())?;
        if !target.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("coding target has non-finite entries"));
        }
        let k = self.atoms.ncols();
        if let Some(e) = excluded {
            if e >= k {
                return Err(Error::invalid("excluded coordinate out of range"));
            }
        }
        let lambda = self.lambda;
        let tol = self.config.tol;
        let b = self.atoms.tr_mul(target);
        let tt = target.norm_squared();

        let mut x = DVector::zeros(k);
        let mut px = match &self.products {
            Products::Gram(_) => DVector::zeros(k),
            Products::Direct => DVector::zeros(self.atoms.nrows()),
        };
        let mut fx = tt;

        // a = 0 is optimal iff |2 b_j| <= lambda everywhere
        let g0 = &b * 2.0;
        if violation_from_gradient(&g0, &x, lambda, excluded) <= tol {
            return Ok(self.finish(target, x));
        }

        let mut y = x.clone();
        let mut py = px.clone();
        let mut t = 1.0_f64;
        let thresh = self.step * lambda;
        let check_every = match self.products {
            Products::Gram(_) => 1,
            Products::Direct => 5,
        };
        let mut last_support: Vec<usize> = Vec::new();
        let mut polished_support: Option<Vec<usize>> = None;
        let mut kkt = f64::INFINITY;

        for iter in 1..=self.config.max_iter {
            let ng = self.neg_gradient(&py, target, &b);
            let mut z = &y + ng * self.step;
            for (j, v) in z.iter_mut().enumerate() {
                *v = if Some(j) == excluded {
                    0.0
                } else if *v > thresh {
                    *v - thresh
                } else if *v < -thresh {
                    *v + thresh
                } else {
                    0.0
                };
            }
            let pz = self.product(&z);
            let fz = self.smooth(&z, &pz, target, &b, tt) + lambda * linalg::l1_norm(&z);

            let x_old = x.clone();
            let px_old = px.clone();
            let fx_old = fx;
            if fz <= fx {
                x = z.clone();
                px = pz.clone();
                fx = fz;
            }
            debug_assert!(fx <= fx_old, "objective increased: {fx_old} -> {fx}");
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(fx);
            }

            let t_next = (1.0 + math::sqrt(1.0 + 4.0 * t * t)) / 2.0;
            let c1 = t / t_next;
            let c2 = (t - 1.0) / t_next;
            y = &x + (&z - &x) * c1 + (&x - &x_old) * c2;
            py = &px + (&pz - &px) * c1 + (&px - &px_old) * c2;
            t = t_next;

            if iter % check_every != 0 && iter != self.config.max_iter {
                continue;
            }
            let g = self.neg_gradient(&px, target, &b);
            kkt = violation_from_gradient(&g, &x, lambda, excluded);
            if kkt <= tol {
                return Ok(self.finish(target, x));
            }

            let support: Vec<usize> = (0..k).filter(|&j| x[j] != 0.0).collect();
            if support == last_support && polished_support.as_ref() != Some(&support) {
                if let Some(c) = self.polish(&support, &x, target, &b, excluded) {
                    let fc = objective(target, &self.atoms, &c, lambda);
                    let fcur = objective(target, &self.atoms, &x, lambda);
                    if fc <= fcur + 1e-14 * (1.0 + fcur) {
                        if let Some(tr) = trace.as_deref_mut() {
                            tr.push(fc);
                        }
                        return Ok(self.finish(target, c));
                    }
                }
                polished_support = Some(support.clone());
            }
            last_support = support;
            if iter == self.config.finish_after {
                if let Some(c) = self.feature_sign(target, &b, DVector::zeros(k), excluded) {
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.push(objective(target, &self.atoms, &c, lambda));
                    }
                    return Ok(self.finish(target, c));
                }
            }
        }
        match self.feature_sign(target, &b, x, excluded) {
            Some(c) => {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(objective(target, &self.atoms, &c, lambda));
                }
                Ok(self.finish(target, c))
            }
            None => Err(Error::NotConverged {
                iterations: self.config.max_iter,
                kkt,
            }),
        }
    }

    // Feature-sign active-set search warm-started at `a`. Each step solves the
    // reduced problem for the current sign pattern and line-searches toward it
    // through the sign changes, so the objective strictly decreases. Returns a
    // certified solution, or None if the steps stall or run out.
    fn feature_sign(
        &self,
        target: &DVector<f64>,
        b: &DVector<f64>,
        mut a: DVector<f64>,
        excluded: Option<usize>,
    ) -> Option<DVector<f64>> {
        let k = a.len();
        let lambda = self.lambda;
        let tol = self.config.tol;
        // G a accumulated over the support of `a`; objective of a support vector
        let gram = match &self.products {
            Products::Gram(g) => Some(g),
            Products::Direct => self.side_gram.as_ref(),
        };
        let gram_col = |j: usize, out: &mut DVector<f64>, w: f64| match gram {
            Some(g) => out.axpy(w, &g.column(j), 1.0),
            None => out.axpy(w, &self.atoms.tr_mul(&self.atoms.column(j)), 1.0),
        };
        let value = |support: &[usize], c: &[f64]| -> f64 {
            let mut r = target.clone();
            for (p, &j) in support.iter().enumerate() {
                r.axpy(-c[p], &self.atoms.column(j), 1.0);
            }
            r.norm_squared() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
        };
        let mut f = objective(target, &self.atoms, &a, lambda);
        for _ in 0..10 * k + 100 {
            let mut ga = DVector::zeros(k);
            for j in 0..k {
                if a[j] != 0.0 {
                    gram_col(j, &mut ga, a[j]);
                }
            }
            let g = (b - ga) * 2.0;
            if violation_from_gradient(&g, &a, lambda, excluded) <= tol {
                return Some(a);
            }
            let mut theta = a.map(math::signum);
            let active_ok = (0..k).all(|j| a[j] == 0.0 || (g[j] - lambda * theta[j]).abs() <= tol);
            if active_ok {
                let mut pick: Option<(usize, f64)> = None;
                for j in 0..k {
                    if a[j] == 0.0 && Some(j) != excluded && g[j].abs() > lambda && pick.is_none_or(|p| g[j].abs() > p.1) {
                        pick = Some((j, g[j].abs()));
                    }
                }
                let (j, _) = pick?;
                theta[j] = math::signum(g[j]);
            }
            let support: Vec<usize> = (0..k).filter(|&j| theta[j] != 0.0).collect();
            let gss = match gram {
                Some(g) => g.select_rows(&support).select_columns(&support),
                None => {
                    let sub = self.atoms.select_columns(&support);
                    sub.tr_mul(&sub)
                }
            };
            let rhs = DVector::from_fn(support.len(), |p, _| b[support[p]] - 0.5 * lambda * theta[support[p]]);
            let start: Vec<f64> = support.iter().map(|&j| a[j]).collect();
            let (fc, c) = match gss.clone().cholesky() {
                Some(ch) => {
                    let sol = ch.solve(&rhs);
                    // full step, then every point where an active coefficient hits zero
                    let mut stops: Vec<(f64, Option<usize>)> = vec![(1.0, None)];
                    for (p, &s0) in start.iter().enumerate() {
                        if s0 * sol[p] < 0.0 {
                            stops.push((s0 / (s0 - sol[p]), Some(p)));
                        }
                    }
                    let mut best: Option<(f64, Vec<f64>)> = None;
                    for &(t, zeroed) in &stops {
                        let c: Vec<f64> = (0..support.len())
                            .map(|p| if zeroed == Some(p) { 0.0 } else { start[p] + t * (sol[p] - start[p]) })
                            .collect();
                        let fc = value(&support, &c);
                        if best.as_ref().is_none_or(|bst| fc < bst.0) {
                            best = Some((fc, c));
                        }
                    }
                    best?
                }
                None => {
                    // singular support: slide along a null direction of the
                    // Gram block (residual fixed, l1 norm falling) until an
                    // active coefficient reaches zero
                    let eig = gss.clone().symmetric_eigen();
                    let mut v = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
                    let slope = |v: &DVector<f64>| -> f64 {
                        support.iter().enumerate().map(|(p, &j)| (lambda * theta[j] - g[j]) * v[p]).sum()
                    };
                    let entering = (0..support.len()).find(|&p| start[p] == 0.0);
                    let flip = match entering {
                        Some(p) => v[p] * theta[support[p]] < 0.0,
                        None => slope(&v) > 0.0,
                    };
                    if flip {
                        v = -v;
                    }
                    if !(slope(&v) < 0.0) {
                        return None;
                    }
                    let (t, zeroed) = (0..support.len())
                        .filter(|&p| start[p] * v[p] < 0.0)
                        .map(|p| (start[p] / -v[p], p))
                        .min_by(|x, y| x.0.total_cmp(&y.0))?;
                    let c: Vec<f64> = (0..support.len())
                        .map(|p| if p == zeroed { 0.0 } else { start[p] + t * v[p] })
                        .collect();
                    (value(&support, &c), c)
                }
            };
            if !(fc < f) {
                return None;
            }
            a = DVector::zeros(k);
            for (p, &j) in support.iter().enumerate() {
                a[j] = c[p];
            }
            f = fc;
        }
        None
    }

    // Closed-form solution on a fixed support and sign pattern, if it certifies.
    fn polish(
        &self,
        support: &[usize],
        x: &DVector<f64>,
        target: &DVector<f64>,
        b: &DVector<f64>,
        excluded: Option<usize>,
    ) -> Option<DVector<f64>> {
        if support.is_empty() {
            return None;
        }
        let s = support.len();
        let gss = match &self.products {
            Products::Gram(g) => DMatrix::from_fn(s, s, |p, q| g[(support[p], support[q])]),
            Products::Direct => {
                let sub = self.atoms.select_columns(support);
                sub.tr_mul(&sub)
            }
        };
        let rhs = DVector::from_fn(s, |p, _| b[support[p]] - 0.5 * self.lambda * math::signum(x[support[p]]));
        let sol = match gss.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => linalg::lstsq(&gss, &rhs),
        };
        let mut c = DVector::zeros(x.len());
        for (p, &j) in support.iter().enumerate() {
            c[j] = sol[p];
        }
        let v = kkt_violation(target, &self.atoms, &c, self.lambda, excluded);
        (v <= self.config.tol).then_some(c)
    }

    fn finish(&self, target: &DVector<f64>, coefficients: DVector<f64>) -> SparseCode {
        let objective = objective(target, &self.atoms, &coefficients, self.lambda);
        SparseCode {
            coefficients,
            penalty: Penalty::L1(self.lambda),
            objective,
        }
    }
}

#[cfg(test)]
mod tests;
