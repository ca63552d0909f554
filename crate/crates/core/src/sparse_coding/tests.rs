use super::*;
use crate::dictionaries::AtomSource;
use crate::rng;
use proptest::prelude::*;
use rand::Rng;

// Minimum over every support and sign pattern of the closed-form
// stationary point, kept only when its signs agree with the pattern.
fn enumerate_lasso(x: &DVector<f64>, d: &DMatrix<f64>, lambda: f64) -> (DVector<f64>, f64) {
    let k = d.ncols();
    let mut best = (DVector::zeros(k), x.norm_squared());
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let sub = d.select_columns(&support);
        let g = sub.transpose() * &sub;
        let Some(ch) = g.clone().cholesky() else { continue };
        let b = sub.transpose() * x;
        for signs in 0u32..(1 << support.len()) {
            let s = DVector::from_fn(support.len(), |p, _| if signs & (1 << p) != 0 { 1.0 } else { -1.0 });
            let a = ch.solve(&(&b - &s * (lambda / 2.0)));
            if a.iter().zip(s.iter()).any(|(v, sg)| v * sg <= 0.0) {
                continue;
            }
            let mut full = DVector::zeros(k);
            for (p, &j) in support.iter().enumerate() {
                full[j] = a[p];
            }
            let f = objective(x, d, &full, lambda);
            if f < best.1 {
                best = (full, f);
            }
        }
    }
    best
}

fn random_instance(seed: u64, m: usize, k: usize) -> (DVector<f64>, Dictionary) {
    let mut r = rng::seeded(seed);
    let d = DMatrix::from_fn(m, k, |_, _| r.random_range(-1.0..1.0));
    let x = DVector::from_fn(m, |_, _| r.random_range(-1.0..1.0));
    (x, Dictionary::new(d, AtomSource::Learned).unwrap())
}

#[test]
fn atom_reproduces_itself() {
    let (_, d) = random_instance(3, 6, 5);
    let x = d.atoms().column(2).into_owned();
    let code = solve_lasso(&CodingProblem::new(&x, &d, 1e-12)).unwrap();
    let mut e3 = DVector::zeros(5);
    e3[2] = 1.0;
    assert!((&code.coefficients - e3).amax() < 1e-6, "{code:?}");
    assert!(code.objective < 1e-9);
}

#[test]
fn zero_target_gives_zero_code() {
    let (_, d) = random_instance(4, 3, 6);
    let x = DVector::zeros(3);
    let p = CodingProblem::new(&x, &d, 0.2);
    let code = solve_lasso(&p).unwrap();
    assert!(code.coefficients.iter().all(|v| *v == 0.0));
    assert_eq!(code.objective, 0.0);
    assert_eq!(kkt_residual(&p, &code).unwrap(), 0.0);
}

#[test]
fn two_by_three_matches_enumeration() {
    let raw = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.7071, 0.0, 1.0, 0.7071]);
    let d = Dictionary::new(raw, AtomSource::Learned).unwrap();
    let x = DVector::from_vec(vec![1.0, 1.0]);
    let p = CodingProblem::new(&x, &d, 0.2);
    let code = solve_lasso(&p).unwrap();
    let (a, f) = enumerate_lasso(&x, d.atoms(), 0.2);
    assert!((code.objective - f).abs() < 1e-6);
    assert!(kkt_violation(&x, d.atoms(), &a, 0.2, None) < 1e-8);
    assert!(kkt_residual(&p, &code).unwrap() <= 1e-5);
}

#[test]
fn random_instances_match_enumeration() {
    for seed in 0..40 {
        let m = 2 + (seed as usize % 3);
        let k = 3 + (seed as usize % 4);
        let (x, d) = random_instance(seed, m, k);
        let lambda = 0.05 + 0.1 * (seed % 5) as f64;
        let p = CodingProblem::new(&x, &d, lambda);
        let code = solve_lasso(&p).unwrap();
        let (_, f) = enumerate_lasso(&x, d.atoms(), lambda);
        assert!((code.objective - f).abs() < 1e-6, "seed {seed}: {} vs {f}", code.objective);
        assert!(kkt_residual(&p, &code).unwrap() <= 1e-5);
        assert!(code.objective <= x.norm_squared() + 1e-12);
    }
}

#[test]
fn objective_field_matches_recomputation() {
    let (x, d) = random_instance(11, 6, 10);
    let code = solve_lasso(&CodingProblem::new(&x, &d, 0.1)).unwrap();
    let f = objective(&x, d.atoms(), &code.coefficients, 0.1);
    assert!((code.objective - f).abs() <= 1e-8 * f.max(1e-300));
}

#[test]
fn traced_objective_never_increases() {
    let (x, d) = random_instance(12, 8, 30);
    let solver = LassoSolver::new(d.atoms().clone(), 0.05, LassoConfig::default()).unwrap();
    let (_, trace) = solver.solve_traced(&x).unwrap();
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
    }
}

#[test]
fn degraded_coding_uses_composed_atoms() {
    let (_, d) = random_instance(13, 16, 12);
    let op = DegradationOperator::random_projection(16, 6, 9).unwrap();
    let y = d.atoms().column(4) * 0.8;
    let z = op.apply(&y).unwrap();
    let p = CodingProblem::new(&z, &d, 0.01).with_operator(&op);
    let code = solve_lasso(&p).unwrap();
    assert!(kkt_residual(&p, &code).unwrap() <= 1e-5);
    let eff = op.apply_columns(d.atoms()).unwrap();
    let direct = LassoSolver::new(eff, 0.01, LassoConfig::default()).unwrap().solve(&z).unwrap();
    assert!((direct.objective - code.objective).abs() < 1e-9);
}

#[test]
fn dimension_mismatch_is_reported() {
    let (_, d) = random_instance(14, 4, 5);
    let x = DVector::zeros(3);
    assert!(matches!(
        solve_lasso(&CodingProblem::new(&x, &d, 0.1)),
        Err(Error::DimensionMismatch { .. })
    ));
    let op = DegradationOperator::random_projection(4, 2, 1).unwrap();
    let z = DVector::zeros(3);
    assert!(solve_lasso(&CodingProblem::new(&z, &d, 0.1).with_operator(&op)).is_err());
}

#[test]
fn non_convergence_carries_kkt() {
    let (x, d) = random_instance(15, 6, 20);
    let cfg = LassoConfig {
        max_iter: 2,
        tol: 0.0,
        ..LassoConfig::default()
    };
    match LassoSolver::new(d.atoms().clone(), 0.01, cfg).unwrap().solve(&x) {
        Err(Error::NotConverged { iterations: 2, kkt }) => assert!(kkt > 0.0),
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn excluded_coordinate_stays_zero() {
    let (_, d) = random_instance(16, 5, 8);
    let x = d.atoms().column(3).into_owned();
    let solver = LassoSolver::new(d.atoms().clone(), 0.05, LassoConfig::default()).unwrap();
    let code = solver.solve_excluding(&x, Some(3)).unwrap();
    assert_eq!(code.coefficients[3], 0.0);
    assert!(kkt_violation(&x, d.atoms(), &code.coefficients, 0.05, Some(3)) <= 1e-5);
}

#[test]
fn one_sparse_picks_most_correlated_lowest_index() {
    let raw = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let d = Dictionary::new(raw, AtomSource::Learned).unwrap();
    let x = DVector::from_vec(vec![2.0, 1.0]);
    let code = code_one_sparse(&x, &d).unwrap();
    assert_eq!(code.coefficients, DVector::from_vec(vec![2.0, 0.0, 0.0]));
    assert!((code.objective - 1.0).abs() < 1e-15);
    assert_eq!(code.penalty, Penalty::OneSparse);
}

#[test]
fn batch_matches_single_solves() {
    let (_, d) = random_instance(17, 6, 9);
    let mut r = rng::seeded(5);
    let xs = DMatrix::from_fn(6, 7, |_, _| r.random_range(-1.0..1.0));
    let batch = code_batch(&xs, &d, 0.1, None).unwrap();
    for i in 0..7 {
        let x = xs.column(i).into_owned();
        let single = solve_lasso(&CodingProblem::new(&x, &d, 0.1)).unwrap();
        assert_eq!(batch.column(i), single.coefficients.column(0));
    }
}

#[test]
fn best_atoms_agrees_with_best_atom() {
    let mut r = rng::seeded(6);
    let a = DMatrix::from_fn(5, 7, |_, _| r.random_range(-1.0..1.0));
    let xs = DMatrix::from_fn(5, 9, |_, _| r.random_range(-1.0..1.0));
    let inv = inverse_norms(&a);
    let batch = best_atoms(&a, &inv, &xs);
    for (i, got) in batch.into_iter().enumerate() {
        let (j, v) = best_atom(&a, &inv, &xs.column(i).into_owned());
        assert_eq!(got.0, j);
        assert!((got.1 - v).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn solutions_are_certified(seed in 0u64..10_000, lambda in 0.01f64..1.0) {
        let (x, d) = random_instance(seed, 5, 9);
        let p = CodingProblem::new(&x, &d, lambda);
        let code = solve_lasso(&p).unwrap();
        prop_assert!(kkt_residual(&p, &code).unwrap() <= 1e-5);
        prop_assert!(code.objective <= x.norm_squared() + 1e-12);
    }
}
