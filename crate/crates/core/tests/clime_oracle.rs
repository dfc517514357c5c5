mod common;

use common::lp::clime_column_lp;
use pddcov::clime::{clime_column, clime_estimate, perturb, symmetrize_min_abs, ClimeConfig, ClimeSolver};
use pddcov::{NormKind, SymmetricMatrix};

fn column_l1(beta: &[f64]) -> f64 {
    beta.iter().map(|v| v.abs()).sum()
}

fn constraint_violation(a: &SymmetricMatrix, beta: &[f64], col: usize) -> f64 {
    let p = a.dim();
    (0..p)
        .map(|k| {
            let e = if k == col { 1.0 } else { 0.0 };
            ((0..p).map(|j| a.get(k, j) * beta[j]).sum::<f64>() - e).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn columns_match_lp_oracle_on_random_5x5() {
    let cfg = ClimeConfig::new(0.1).with_epsilon(0.0).with_tolerance(1e-8, 50_000);
    for seed in 0..100u64 {
        let a = common::random_spd(5, 0.3, seed);
        let rows = a.rows();
        let solver = ClimeSolver::new(&a);
        for col in 0..5 {
            let (opt, _) = clime_column_lp(&rows, col, 0.1).expect("lp feasible");
            let sol = solver.solve_column(col, 0.1, cfg.solver_tol, cfg.max_iter).unwrap();
            let obj = column_l1(&sol.beta);
            assert!((obj - opt).abs() < 1e-5, "seed {seed} col {col}: {obj} vs {opt}");
            assert!(obj <= opt + 1e-5);
            assert!(constraint_violation(&a, &sol.beta, col) <= 0.1 + 2.0 * cfg.solver_tol);
        }
    }
}

#[test]
fn minimal_on_3x3_instances_across_lambdas() {
    for seed in 0..30u64 {
        let a = common::random_spd(3, 0.5, 1000 + seed);
        let rows = a.rows();
        for &lambda in &[0.02, 0.1, 0.3] {
            let cfg = ClimeConfig::new(lambda).with_epsilon(0.0).with_tolerance(1e-8, 50_000);
            for col in 0..3 {
                let sol = clime_column(&a, col, lambda, &cfg).unwrap();
                let (opt, _) = clime_column_lp(&rows, col, lambda).unwrap();
                assert!(column_l1(&sol.beta) <= opt + 1e-5, "seed {seed} lambda {lambda}");
                assert!(constraint_violation(&a, &sol.beta, col) <= lambda + 2e-8);
            }
        }
    }
}

#[test]
fn estimate_is_feasible_and_symmetric() {
    for seed in 0..10u64 {
        let s = common::random_spd(8, 0.1, 2000 + seed);
        let cfg = ClimeConfig::new(0.05).with_epsilon(0.01);
        let fit = clime_estimate(&s, None, &cfg).unwrap();
        assert!(fit.max_residual <= 0.05 + 2.0 * cfg.solver_tol, "{}", fit.max_residual);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(fit.omega.get(i, j), fit.omega.get(j, i));
            }
        }
        let again = symmetrize_min_abs(fit.omega.as_matrix());
        assert_eq!(again, fit.omega);
    }
}

#[test]
fn column_solutions_match_joint_problem_total() {
    // The joint matrix problem separates by column, so the assembled raw
    // estimate has the same total |.|_1 as the sum of per-column optima.
    let s = common::random_spd(4, 0.4, 77);
    let rows = s.rows();
    let cfg = ClimeConfig::new(0.08).with_epsilon(0.0).with_tolerance(1e-8, 50_000);
    let fit = clime_estimate(&s, None, &cfg).unwrap();
    let total_raw: f64 = fit.raw.iter().map(|v| v.abs()).sum();
    let total_lp: f64 = (0..4).map(|c| clime_column_lp(&rows, c, 0.08).unwrap().0).sum();
    assert!((total_raw - total_lp).abs() < 1e-5, "{total_raw} vs {total_lp}");
    // The symmetrized estimate never exceeds the raw total.
    assert!(fit.omega.norm(NormKind::ElemL1) <= total_raw + 1e-12);
}

#[test]
fn rank_deficient_covariance_is_lifted_by_perturbation() {
    let mut r = common::rng(9);
    use rand_distr::{Distribution, StandardNormal};
    let x: nalgebra::DMatrix<f64> = nalgebra::DMatrix::from_fn(5, 3, |_, _| StandardNormal.sample(&mut r));
    let panel = pddcov::TimeSeriesPanel::new(x).unwrap();
    let s = pddcov::moments::sample_covariance(&panel).unwrap();
    assert!(s.min_eigenvalue() < 1e-10);
    let eps = 1.0 / 3f64.sqrt();
    let lifted = perturb(&s, eps).unwrap();
    assert!(lifted.min_eigenvalue() >= eps - 1e-10);
}

/// Precision matrix with entries `0.6^{|i-j|}`.
fn geometric_precision(p: usize) -> SymmetricMatrix {
    SymmetricMatrix::from_upper_fn(p, |i, j| 0.6f64.powi((j - i) as i32)).unwrap()
}

#[test]
fn population_input_recovers_dominant_pattern() {
    let omega = geometric_precision(5);
    let sigma = omega.inverse().unwrap();
    let cfg = ClimeConfig::new(0.05).with_epsilon(0.0).with_tolerance(1e-8, 50_000);
    let fit = clime_estimate(&sigma, None, &cfg).unwrap();
    for i in 0..5 {
        assert!(fit.omega.get(i, i) > 0.0);
        if i + 1 < 5 {
            let (est, truth) = (fit.omega.get(i, i + 1), omega.get(i, i + 1));
            assert!(est != 0.0 && est.signum() == truth.signum(), "({i},{}) = {est}", i + 1);
        }
    }
    // columns agree with the LP oracle
    let rows = sigma.rows();
    for col in 0..5 {
        let (opt, _) = clime_column_lp(&rows, col, 0.05).unwrap();
        let got: f64 = fit.raw.column(col).iter().map(|v| v.abs()).sum();
        assert!((got - opt).abs() < 1e-5);
    }
}
