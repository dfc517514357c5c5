mod common;

use nalgebra::DMatrix;
use pddcov::crossval::*;
use pddcov::moments::sample_covariance;
use pddcov::simulate::{build_model, fit_exp_sum, simulate_iid, simulate_mixture, stream_rng, ModelSpec};
use pddcov::spice::SpiceConfig;
use pddcov::threshold::{threshold_correlation, ThresholdRule};
use pddcov::{NormKind, TimeSeriesPanel};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn distance(a: &[usize], b: &[usize]) -> usize {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x.abs_diff(*y)))
        .min()
        .unwrap()
}

fn check_invariants(plan: &CvPlan) {
    let (h1, h2) = match plan.scheme {
        PlanScheme::GapBlock { h1, h2 } => (h1, h2),
        _ => panic!("gap-block plan expected"),
    };
    let n = plan.n;
    let len = n.div_ceil(h1);
    assert_eq!(plan.splits.len(), h1 + h2);
    let mut covered = vec![false; n];
    for s in &plan.splits {
        assert!(s.training.len() >= 2);
        assert!(s.validation.windows(2).all(|w| w[1] == w[0] + 1), "contiguous validation block");
        assert!(s.training.iter().all(|t| !s.validation.contains(t)));
        let block = s.validation.len();
        assert!(distance(&s.training, &s.validation) > block - 1);
        match s.kind {
            SplitKind::Block => s.validation.iter().for_each(|&t| covered[t] = true),
            SplitKind::RandomBlock => {
                assert_eq!(block, len);
                // at least `len` discarded columns on each open side
                assert!(distance(&s.training, &s.validation) >= len + 1);
                let excluded = n - block - s.training.len();
                let room_left = s.validation[0].min(len);
                let room_right = (n - 1 - s.validation[block - 1]).min(len);
                assert_eq!(excluded, room_left + room_right);
            }
            SplitKind::Fold => panic!("unexpected fold"),
        }
    }
    assert!(covered.iter().all(|&c| c), "step-1 blocks cover every column");
}

#[test]
fn random_blocks_keep_their_gap() {
    for seed in 0..100 {
        let plan = make_plan(40, 4, 3, seed).unwrap();
        check_invariants(&plan);
        assert_eq!(plan, make_plan(40, 4, 3, seed).unwrap());
    }
}

#[test]
fn seeds_change_random_blocks() {
    let starts = |seed| {
        make_plan(200, 10, 10, seed).unwrap().splits[10..]
            .iter()
            .map(|s| s.validation[0])
            .collect::<Vec<_>>()
    };
    assert_ne!(starts(1), starts(2));
}

proptest! {
    #[test]
    fn plan_invariants(h1 in 4usize..12, extra in 0usize..200, h2 in 0usize..12, seed in any::<u64>()) {
        let n = 4 * h1 + extra;
        check_invariants(&make_plan(n, h1, h2, seed).unwrap());
    }
}

fn gaussian_panel(p: usize, n: usize, seed: u64, mix: f64) -> TimeSeriesPanel {
    let mut rng = common::rng(seed);
    let z: DMatrix<f64> = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let shared: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    TimeSeriesPanel::new(DMatrix::from_fn(p, n, |i, t| z[(i, t)] + mix * shared[t])).unwrap()
}

/// Centered moment with divisor `len`, built directly from the columns.
fn covariance_of(x: &TimeSeriesPanel, cols: &[usize]) -> DMatrix<f64> {
    let p = x.p();
    let k = cols.len() as f64;
    let d = x.data();
    let mean: Vec<f64> = (0..p).map(|i| cols.iter().map(|&t| d[(i, t)]).sum::<f64>() / k).collect();
    DMatrix::from_fn(p, p, |i, j| {
        cols.iter().map(|&t| (d[(i, t)] - mean[i]) * (d[(j, t)] - mean[j])).sum::<f64>() / k
    })
}

fn to_corr(s: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt())
}

fn oracle_cv_loss(x: &TimeSeriesPanel, plan: &CvPlan, tau: f64, hard: bool, corr: bool) -> f64 {
    let mut total = 0.0;
    for s in &plan.splits {
        let (mut tr, mut va) = (covariance_of(x, &s.training), covariance_of(x, &s.validation));
        if corr {
            tr = to_corr(&tr);
            va = to_corr(&va);
        }
        let mut loss = 0.0;
        for i in 0..x.p() {
            for j in 0..x.p() {
                let v = tr[(i, j)];
                let kept = if corr && i == j {
                    1.0
                } else if hard {
                    if v.abs() > tau { v } else { 0.0 }
                } else {
                    v.signum() * (v.abs() - tau).max(0.0)
                };
                loss += (kept - va[(i, j)]).powi(2);
            }
        }
        total += loss;
    }
    total / plan.splits.len() as f64
}

#[test]
fn curve_matches_direct_computation() {
    let x = gaussian_panel(6, 120, 3, 0.8);
    let plan = make_plan(120, 4, 3, 9).unwrap();
    let grid = TuningGrid::new(vec![0.0, 0.05, 0.2, 0.5]).unwrap();
    for (rule, hard) in [(ThresholdRule::Hard, true), (ThresholdRule::Soft, false)] {
        for (target, corr) in [(Target::Covariance, false), (Target::Correlation, true)] {
            let cv = select_tau(&x, &plan, &grid, rule, target).unwrap();
            for &(tau, loss) in &cv.curve {
                let want = oracle_cv_loss(&x, &plan, tau, hard, corr);
                assert!((loss - want).abs() < 1e-10 * want.max(1.0), "{tau}: {loss} vs {want}");
            }
        }
    }
}

#[test]
fn single_candidate_is_selected() {
    let x = gaussian_panel(4, 60, 1, 0.5);
    let plan = make_plan(60, 4, 2, 0).unwrap();
    let grid = TuningGrid::new(vec![0.0]).unwrap();
    let cv = select_tau(&x, &plan, &grid, ThresholdRule::Hard, Target::Covariance).unwrap();
    assert_eq!(cv.selected, 0.0);
    let grid = TuningGrid::new(vec![0.3]).unwrap();
    let cv = select_lambda_precision(&x, &plan, &grid, PrecisionMethod::Spice(SpiceConfig::new(1.0))).unwrap();
    assert_eq!(cv.selected, 0.3);
}

#[test]
fn strong_correlation_keeps_zero_threshold() {
    let x = gaussian_panel(5, 100, 4, 2.0);
    let plan = make_plan(100, 4, 4, 4).unwrap();
    let grid = TuningGrid::new(vec![0.0, 1e3]).unwrap();
    let cv = select_tau(&x, &plan, &grid, ThresholdRule::Hard, Target::Covariance).unwrap();
    let l0 = oracle_cv_loss(&x, &plan, 0.0, true, false);
    let lh = oracle_cv_loss(&x, &plan, 1e3, true, false);
    assert!(l0 < lh);
    assert_eq!(cv.selected, 0.0);
}

#[test]
fn spice_large_penalty_endpoint_has_closed_form_loss() {
    let x = gaussian_panel(4, 80, 6, 0.0);
    let plan = kfold_plan(80, 5, 2).unwrap();
    let grid = TuningGrid::new(vec![0.01, 10.0]).unwrap();
    let cv = select_lambda_precision(&x, &plan, &grid, PrecisionMethod::Spice(SpiceConfig::new(1.0))).unwrap();
    // at λ = 10 the correlation-scale estimate is I, so Ω = diag(1/s_ii)
    let mut total = 0.0;
    for s in &plan.splits {
        let (tr, va) = (covariance_of(&x, &s.training), covariance_of(&x, &s.validation));
        total += (0..4).map(|i| va[(i, i)] / tr[(i, i)] + tr[(i, i)].ln()).sum::<f64>();
    }
    let want = total / plan.splits.len() as f64;
    assert!((cv.curve[1].1 - want).abs() < 1e-8, "{} vs {want}", cv.curve[1].1);
    let expected = if cv.curve[0].1 <= cv.curve[1].1 { 0.01 } else { 10.0 };
    assert_eq!(cv.selected, expected);
}

#[test]
fn failed_candidates_count_as_infinite() {
    // p > n on the training sets: CLIME without perturbation is infeasible
    // at small λ, and λ = 1 gives the zero matrix
    let x = gaussian_panel(30, 40, 2, 0.3);
    let plan = kfold_plan(40, 4, 0).unwrap();
    let grid = TuningGrid::new(vec![0.001, 0.5, 1.0]).unwrap();
    let cfg = pddcov::clime::ClimeConfig::new(1.0).with_epsilon(0.0);
    let cv = select_lambda_precision(&x, &plan, &grid, PrecisionMethod::Clime(cfg)).unwrap();
    assert!(cv.curve[0].1.is_infinite());
    assert!(cv.curve[2].1.is_infinite());
    assert!(cv.curve[1].1.is_finite());
    assert_eq!(cv.selected, 0.5);
    assert!(cv.skipped.contains(&(0, 0.001)) && cv.skipped.contains(&(3, 1.0)));
}

#[test]
fn constant_series_propagates_moment_error() {
    let mut d = DMatrix::from_fn(3, 40, |i, t| ((i + 1) * t) as f64 % 7.0);
    d.row_mut(1).fill(2.0);
    let x = TimeSeriesPanel::new(d).unwrap();
    let plan = make_plan(40, 4, 0, 0).unwrap();
    let r = select_tau(&x, &plan, &TuningGrid::default_grid(), ThresholdRule::Hard, Target::Correlation);
    assert_eq!(r.unwrap_err(), pddcov::Error::ZeroVariance(1));
}

#[test]
fn selected_threshold_tracks_oracle() {
    // Model 2, p = 50, n = 200, α = 1, 50 replications
    let (p, n) = (50, 200);
    let model = build_model(&ModelSpec::new(2, p)).unwrap();
    let fit = fit_exp_sum(1.0, n, 8, 0.05).unwrap();
    let grid = TuningGrid::default_grid();
    let mut hits = 0;
    for rep in 0..50u64 {
        let x = simulate_mixture(&model.sigma, &fit, n, &mut stream_rng(77, rep)).unwrap();
        let plan = make_plan(n, 10, 10, rep).unwrap();
        let cv = select_tau(&x, &plan, &grid, ThresholdRule::Hard, Target::Correlation).unwrap();
        let r = pddcov::moments::sample_correlation(&x).unwrap();
        let losses: Vec<f64> = grid
            .values()
            .iter()
            .map(|&t| threshold_correlation(&r, t, ThresholdRule::Hard).unwrap().sub(&model.sigma).unwrap().norm(NormKind::Frobenius))
            .collect();
        let best = (0..losses.len()).min_by(|&a, &b| losses[a].total_cmp(&losses[b])).unwrap();
        let chosen = grid.values().iter().position(|&v| v == cv.selected).unwrap();
        hits += usize::from(chosen.abs_diff(best) <= 1);
    }
    assert!(hits >= 35, "{hits} of 50 within one grid step");
}

#[test]
fn spice_cv_recovers_band_support() {
    let (p, n) = (50, 200);
    let model = build_model(&ModelSpec::new(4, p)).unwrap();
    let x = simulate_iid(&model.sigma, n, &mut stream_rng(5, 0)).unwrap();
    let plan = kfold_plan(n, 10, 5).unwrap();
    let cv = select_lambda_precision(&x, &plan, &TuningGrid::default_grid(), PrecisionMethod::Spice(SpiceConfig::new(1.0))).unwrap();
    let fit = pddcov::spice::spice_estimate(&sample_covariance(&x).unwrap(), &SpiceConfig::new(cv.selected)).unwrap();
    let report = pddcov::bench::evaluate(&fit.omega, &model.omega, true).unwrap();
    assert!(report.tpr.unwrap() > 0.9, "{report:?}");
}

#[test]
fn gap_block_cv_on_long_memory_data_runs() {
    let fit = fit_exp_sum(0.5, 200, 8, 0.05).unwrap();
    let model = build_model(&ModelSpec::new(1, 10)).unwrap();
    let x = simulate_mixture(&model.sigma, &fit, 200, &mut stream_rng(1, 1)).unwrap();
    let plan = make_plan(200, 10, 10, 3).unwrap();
    let cv = select_tau(&x, &plan, &TuningGrid::default_grid(), ThresholdRule::Soft, Target::Correlation).unwrap();
    assert_eq!(cv.curve.len(), 20);
    assert!(cv.curve.iter().all(|(_, l)| l.is_finite()));
}
