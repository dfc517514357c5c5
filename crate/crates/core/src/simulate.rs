//! Gaussian panels with polynomially decaying temporal dependence.
//!
//! The kernel `x^{-α}` on `[1, n]` is approximated by `Σ a_i e^{-b_i x}`
//! with `a_i >= 0`. Each term drives an AR(1) process with coefficient
//! `e^{-b_i}` and stationary covariance `Σ`; mixing them with weights
//! `c_i = √(a_i e^{-b_i})` gives lag-`j` cross-correlations
//! `Σ_i a_i e^{-b_i (j+1)} R ≈ (j+1)^{-α} R`. The weights are rescaled so
//! that `Σ c_i² = 1`, which makes `Σ` the exact marginal covariance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SymmetricMatrix};
use crate::moments::TimeSeriesPanel;

pub const DEFAULT_TERMS: usize = 8;
pub const DEFAULT_FIT_TOL: f64 = 0.05;
/// Largest rate on the exponent grid.
const B_MAX: f64 = 5.0;
/// The smallest rate is `B_MIN_SCALE / n`.
const B_MIN_SCALE: f64 = 0.1;
/// Log-spaced points used for the least-squares fit.
const FIT_POINTS: usize = 400;
/// Error is measured at every integer up to this domain size, and on a
/// log grid of this many points beyond it.
const CHECK_POINTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSumFit {
    /// `(a_i, b_i)` pairs.
    pub terms: Vec<(f64, f64)>,
    pub alpha: f64,
    pub domain_n: usize,
    pub max_rel_err: f64,
}

impl ExpSumFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(a, b)| a * (-b * x).exp()).sum()
    }

    /// Unnormalized mixing weights `√(a_i e^{-b_i})`.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.terms.iter().map(|&(a, b)| (a * (-b).exp()).sqrt()).collect()
    }

    /// `1 / √(Σ c_i²)`, the factor applied to the raw weights.
    pub fn normalization(&self) -> f64 {
        1.0 / self.raw_weights().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::BadParam("exponential sum has no terms".into()));
        }
        for &(a, b) in &self.terms {
            if !(a >= 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
                return Err(Error::BadParam(format!("invalid term (a = {a}, b = {b})")));
            }
        }
        if !(self.raw_weights().iter().any(|&c| c > 0.0)) {
            return Err(Error::BadParam("all exponential-sum weights are zero".into()));
        }
        Ok(())
    }
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
}

/// Lawson-Hanson nonnegative least squares: `min ‖A x - y‖ s.t. x >= 0`.
/// Columns are scaled to unit norm internally; zero columns get `x = 0`.
pub fn nnls(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let a = DMatrix::from_fn(a.nrows(), n, |r, c| if norms[c] > 0.0 { a[(r, c)] / norms[c] } else { 0.0 });
    let usable: Vec<bool> = norms.iter().map(|&v| v > 0.0).collect();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 10.0 * f64::EPSILON * a.nrows().max(n) as f64 * y.norm().max(1.0);
    let max_outer = 3 * n + 10;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(y, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _ in 0..max_outer {
        let w = a.transpose() * (y - &a * &x);
        let Some((j, wj)) = (0..n)
            .filter(|&j| !passive[j] && usable[j])
            .map(|j| (j, w[j]))
            .max_by(|p, q| p.1.total_cmp(&q.1))
        else {
            break;
        };
        if wj <= tol {
            break;
        }
        passive[j] = true;
        for _ in 0..max_outer {
            let z = solve_passive(&passive);
            if (0..n).all(|k| !passive[k] || z[k] > 0.0) {
                x = z;
                break;
            }
            // step back toward the feasible region
            let mut step = f64::INFINITY;
            let mut blocking = j;
            for k in 0..n {
                if passive[k] && z[k] <= 0.0 {
                    let s = x[k] / (x[k] - z[k]);
                    if s < step {
                        step = s;
                        blocking = k;
                    }
                }
            }
            x += (z - &x) * step;
            x[blocking] = 0.0;
            for k in 0..n {
                if passive[k] && x[k] <= 0.0 {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    for (k, v) in x.iter_mut().enumerate() {
        if usable[k] {
            *v /= norms[k];
        }
    }
    x
}

/// Max relative error of `fit` against `x^{-α}` over `[1, n]`.
fn max_relative_error(fit: &ExpSumFit, alpha: f64, n: usize) -> f64 {
    let xs: Vec<f64> = if n <= CHECK_POINTS {
        (1..=n).map(|x| x as f64).collect()
    } else {
        log_grid(1.0, n as f64, CHECK_POINTS)
    };
    xs.iter()
        .map(|&x| {
            let h = x.powf(-alpha);
            (fit.eval(x) - h).abs() / h
        })
        .fold(0.0, f64::max)
}

/// Fits `x^{-α}` on `[1, n]` by `n_terms` exponentials with rates on a
/// geometric grid over `[0.1/n, 5]` and nonnegative amplitudes chosen by
/// least squares in relative error.
pub fn fit_exp_sum(alpha: f64, n: usize, n_terms: usize, tol: f64) -> Result<ExpSumFit> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::BadParam(format!("alpha must be positive, got {alpha}")));
    }
    if n < 2 || n_terms < 2 {
        return Err(Error::BadParam(format!(
            "need n >= 2 and n_terms >= 2, got n = {n}, n_terms = {n_terms}"
        )));
    }
    let rates = log_grid(B_MIN_SCALE / n as f64, B_MAX, n_terms);
    let xs = log_grid(1.0, n as f64, FIT_POINTS);
    let design = DMatrix::from_fn(xs.len(), n_terms, |r, c| (-rates[c] * xs[r]).exp() * xs[r].powf(alpha));
    let target = DVector::from_element(xs.len(), 1.0);
    let amps = nnls(&design, &target);
    let terms: Vec<(f64, f64)> = amps
        .iter()
        .zip(&rates)
        .filter(|(a, _)| **a > 0.0)
        .map(|(&a, &b)| (a, b))
        .collect();
    let mut fit = ExpSumFit {
        terms,
        alpha,
        domain_n: n,
        max_rel_err: f64::INFINITY,
    };
    fit.max_rel_err = max_relative_error(&fit, alpha, n);
    if !(fit.max_rel_err <= tol) {
        return Err(Error::FitFailed {
            max_rel_err: fit.max_rel_err,
        });
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: u8,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub sigma: SymmetricMatrix,
    pub omega: SymmetricMatrix,
}

impl ModelSpec {
    pub fn new(model: u8, p: usize) -> Self {
        Self { model, p }
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            1 | 3 if self.p >= 1 => Ok(()),
            2 | 4 if self.p >= 3 => Ok(()),
            1..=4 => Err(Error::BadParam(format!(
                "model {} needs p >= 3, got {}",
                self.model, self.p
            ))),
            m => Err(Error::BadParam(format!("unknown model {m} (expected 1-4)"))),
        }
    }

    /// True when the matrix defined by the model is the precision matrix.
    pub fn defines_precision(&self) -> bool {
        matches!(self.model, 3 | 4)
    }
}

fn geometric(p: usize) -> SymmetricMatrix {
    SymmetricMatrix::from_upper_fn(p, |i, j| 0.6f64.powi((j - i) as i32)).expect("finite")
}

fn banded(p: usize) -> SymmetricMatrix {
    SymmetricMatrix::from_upper_fn(p, |i, j| match j - i {
        0 => 1.0,
        1 => 0.6,
        2 => 0.3,
        _ => 0.0,
    })
    .expect("finite")
}

fn check_pd(m: &SymmetricMatrix) -> Result<()> {
    let min_eig = m.min_eigenvalue();
    if min_eig > 0.0 {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { min_eig })
    }
}

/// Models 1 and 2 define `Σ` (geometric decay `0.6^{|i-j|}` and the
/// 1/0.6/0.3 band); Models 3 and 4 use the same patterns for `Ω`.
pub fn build_model(spec: &ModelSpec) -> Result<ModelMatrices> {
    spec.validate()?;
    let defined = match spec.model {
        1 | 3 => geometric(spec.p),
        _ => banded(spec.p),
    };
    check_pd(&defined)?;
    let other = defined.inverse()?;
    check_pd(&other)?;
    Ok(if spec.defines_precision() {
        ModelMatrices {
            sigma: other,
            omega: defined,
        }
    } else {
        ModelMatrices {
            sigma: defined,
            omega: other,
        }
    })
}

/// Generator for replication `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn lower_factor(sigma: &SymmetricMatrix) -> Result<DMatrix<f64>> {
    sigma.cholesky_lower().ok_or_else(|| Error::NotPositiveDefinite {
        min_eig: sigma.min_eigenvalue(),
    })
}

/// `n` columns `X_t = Σ_i c_i Y_t^{(i)}` of the AR(1) mixture with marginal
/// covariance `sigma`.
pub fn simulate_mixture(
    sigma: &SymmetricMatrix,
    fit: &ExpSumFit,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TimeSeriesPanel> {
    fit.validate()?;
    if n < 2 {
        return Err(Error::DegenerateInput(format!("need n >= 2, got {n}")));
    }
    let l = lower_factor(sigma)?;
    let p = sigma.dim();
    let scale = fit.normalization();
    // The factor commutes with the scalar recursions, so mix unit-variance
    // AR(1) coordinates first and apply it once.
    let mut mix = DMatrix::<f64>::zeros(p, n);
    let mut state = vec![0.0; p];
    for (&(_, b), c) in fit.terms.iter().zip(fit.raw_weights()) {
        if c == 0.0 {
            continue;
        }
        let w = c * scale;
        let rho = (-b).exp();
        let innov = (1.0 - rho * rho).sqrt();
        for (k, s) in state.iter_mut().enumerate() {
            *s = StandardNormal.sample(rng);
            mix[(k, 0)] += w * *s;
        }
        for t in 1..n {
            for (k, s) in state.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                *s = rho * *s + innov * e;
                mix[(k, t)] += w * *s;
            }
        }
    }
    TimeSeriesPanel::new(l * mix)
}

/// `n` independent `N(0, sigma)` columns.
pub fn simulate_iid(sigma: &SymmetricMatrix, n: usize, rng: &mut ChaCha8Rng) -> Result<TimeSeriesPanel> {
    if n < 2 {
        return Err(Error::DegenerateInput(format!("need n >= 2, got {n}")));
    }
    let l = lower_factor(sigma)?;
    let z = DMatrix::from_fn(sigma.dim(), n, |_, _| StandardNormal.sample(rng));
    TimeSeriesPanel::new(l * z)
}

/// Model panel from the AR(1) mixture, deterministic in `seed`.
pub fn simulate_pdd(spec: &ModelSpec, fit: &ExpSumFit, n: usize, seed: u64) -> Result<TimeSeriesPanel> {
    let m = build_model(spec)?;
    simulate_mixture(&m.sigma, fit, n, &mut stream_rng(seed, 0))
}

/// Lag-`lag` sample cross-correlations: entry `(k, l)` correlates
/// `x_{k,t}` with `x_{l,t+lag}`, using full-sample means and variances and
/// divisor `n`.
pub fn empirical_cross_correlation(x: &TimeSeriesPanel, lag: usize) -> Result<DenseMatrix> {
    let (p, n) = (x.p(), x.n());
    if lag + 2 > n {
        return Err(Error::BadLag { lag, n });
    }
    if let Some(i) = x.first_constant_series() {
        return Err(Error::ZeroVariance(i));
    }
    let data = x.data();
    let mean = data.column_mean();
    let mut c = data.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    let sd: Vec<f64> = (0..p)
        .map(|k| (c.row(k).iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt())
        .collect();
    let head = c.columns(0, n - lag);
    let tail = c.columns(lag, n - lag);
    let cross = head * tail.transpose() / n as f64;
    DenseMatrix::from_matrix(DMatrix::from_fn(p, p, |k, l| {
        if lag == 0 && k == l {
            1.0
        } else {
            cross[(k, l)] / (sd[k] * sd[l])
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_entries() {
        let m = build_model(&ModelSpec::new(1, 3)).unwrap();
        let want = [[1.0, 0.6, 0.36], [0.6, 1.0, 0.6], [0.36, 0.6, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.sigma.get(i, j) - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn model_two_band() {
        let m = build_model(&ModelSpec::new(2, 4)).unwrap();
        assert_eq!(m.sigma.get(0, 2), 0.3);
        assert_eq!(m.sigma.get(0, 3), 0.0);
    }

    #[test]
    fn model_three_two_by_two() {
        let m = build_model(&ModelSpec::new(3, 2)).unwrap();
        assert_eq!(m.omega.get(0, 1), 0.6);
        assert!((m.sigma.get(0, 0) - 1.0 / 0.64).abs() < 1e-12);
        assert!((m.sigma.get(0, 1) + 0.6 / 0.64).abs() < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(build_model(&ModelSpec::new(2, 2)).is_err());
        assert!(build_model(&ModelSpec::new(5, 10)).is_err());
    }

    #[test]
    fn fit_rejects_nonpositive_alpha() {
        assert!(matches!(fit_exp_sum(0.0, 100, 1, 0.05), Err(Error::BadParam(_))));
        assert!(matches!(fit_exp_sum(-1.0, 100, 8, 0.05), Err(Error::BadParam(_))));
    }

    #[test]
    fn fit_alpha_one() {
        let fit = fit_exp_sum(1.0, 200, 8, 0.05).unwrap();
        assert!(fit.max_rel_err < 0.05);
        assert!(fit.terms.iter().all(|&(a, _)| a >= 0.0));
        for x in 1..=200 {
            let x = x as f64;
            assert!((fit.eval(x) * x - 1.0).abs() <= fit.max_rel_err + 1e-12);
        }
    }

    #[test]
    fn unattainable_tolerance_fails() {
        assert!(matches!(fit_exp_sum(0.5, 200, 2, 1e-6), Err(Error::FitFailed { .. })));
    }

    #[test]
    fn nnls_recovers_nonnegative_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![2.0, -1.0, 1.0]);
        let x = nnls(&a, &y);
        // unconstrained optimum has a negative second coordinate
        assert!(x[1] == 0.0);
        assert!((x[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_panel() {
        let fit = fit_exp_sum(0.5, 100, 8, 0.05).unwrap();
        let spec = ModelSpec::new(1, 4);
        let a = simulate_pdd(&spec, &fit, 100, 11).unwrap();
        let b = simulate_pdd(&spec, &fit, 100, 11).unwrap();
        let c = simulate_pdd(&spec, &fit, 100, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn lag_zero_is_sample_correlation() {
        let spec = ModelSpec::new(2, 5);
        let m = build_model(&spec).unwrap();
        let x = simulate_iid(&m.sigma, 300, &mut stream_rng(3, 0)).unwrap();
        let r0 = empirical_cross_correlation(&x, 0).unwrap();
        let r = crate::moments::sample_correlation(&x).unwrap();
        assert!((r0.as_matrix() - r.as_matrix()).amax() < 1e-12);
        assert!(matches!(empirical_cross_correlation(&x, 299), Err(Error::BadLag { .. })));
    }
}
