//! SPICE: graphical lasso on the sample correlation matrix with an
//! off-diagonal-only penalty,
//!
//! ```text
//! K̂ = argmin_{K ≻ 0} tr(K R̂) - log det K + λ2 |K|_{1,off},
//! Ω̂ = Ŵ^{-1} K̂ Ŵ^{-1},   Ŵ = diag(σ̂_11, ..., σ̂_pp)^{1/2}.
//! ```
//!
//! The solver is blockwise coordinate descent on the dual variable
//! `W = K^{-1}` (one lasso per column). The diagonal of `W` stays equal to
//! the diagonal of `R̂` because it is unpenalized. Iteration stops once both
//! the duality gap and the stationarity violation fall below `tol`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::moments::correlation_from_covariance;

const INNER_TOL: f64 = 1e-10;
const INNER_MAX_PASSES: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiceConfig {
    pub lambda2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SpiceConfig {
    pub fn new(lambda2: f64) -> Self {
        Self {
            lambda2,
            tol: 1e-6,
            max_iter: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda2 > 0.0) || !self.lambda2.is_finite() {
            return Err(Error::BadParam(format!("lambda2 = {} must be > 0", self.lambda2)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::BadParam("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::BadParam("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GlassoFit {
    /// Estimated inverse correlation matrix `K̂`.
    pub k: SymmetricMatrix,
    /// Dual iterate, approximately `K̂^{-1}`.
    pub w: SymmetricMatrix,
    /// Lasso coefficients; column `j` regresses variable `j` on the others.
    betas: DMatrix<f64>,
    pub iterations: usize,
    pub duality_gap: f64,
    /// Primal objective after every sweep.
    pub objective_history: Vec<f64>,
}

impl GlassoFit {
    pub fn min_eigenvalue(&self) -> f64 {
        self.k.min_eigenvalue()
    }
}

/// `tr(K R) - log det K + λ |K|_{1,off}`; `+∞` when `K` is not PD.
pub fn spice_objective(k: &SymmetricMatrix, r: &SymmetricMatrix, lambda2: f64) -> f64 {
    match k.log_det_pd() {
        Some(ld) => {
            let tr: f64 = k.as_matrix().component_mul(r.as_matrix()).sum();
            tr - ld + lambda2 * k.norm(crate::linalg::NormKind::ElemL1Off)
        }
        None => f64::INFINITY,
    }
}

/// Largest violation of the stationarity conditions at `k`: unit diagonal
/// of `k⁻¹`, and `r_ij - (k⁻¹)_ij` equal to `-λ sign(k_ij)` on the support
/// and bounded by `λ` off it. Infinite when `k` is not invertible.
pub fn kkt_violation(k: &SymmetricMatrix, r: &SymmetricMatrix, lambda2: f64) -> f64 {
    let Ok(w) = k.inverse() else {
        return f64::INFINITY;
    };
    let p = k.dim();
    let mut worst = 0.0f64;
    for j in 0..p {
        worst = worst.max((w.get(j, j) - r.get(j, j)).abs());
        for i in 0..j {
            let g = r.get(i, j) - w.get(i, j);
            let kij = k.get(i, j);
            let v = if kij != 0.0 {
                (g + lambda2 * kij.signum()).abs()
            } else {
                (g.abs() - lambda2).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Coordinate descent for `min ½ βᵀVβ - sᵀβ + λ|β|_1`, where `V` is `W`
/// with row/column `j` removed (indices in `others`). `beta` is indexed by
/// the full `p` and `beta[j]` is ignored. Returns `Vβ` over `others`.
fn lasso_column(
    w: &DMatrix<f64>,
    r: &DMatrix<f64>,
    j: usize,
    lambda: f64,
    beta: &mut DVector<f64>,
) -> DVector<f64> {
    let p = w.nrows();
    // g = Vβ, indexed by the full p (entry j is junk and overwritten below)
    let mut g = DVector::zeros(p);
    let gs = g.as_mut_slice();
    let ws = w.as_slice();
    for k in 0..p {
        if k == j || beta[k] == 0.0 {
            continue;
        }
        let bk = beta[k];
        for (gi, wik) in gs.iter_mut().zip(&ws[k * p..(k + 1) * p]) {
            *gi += wik * bk;
        }
    }
    let rj = &r.as_slice()[j * p..(j + 1) * p];
    let mut full_pass = true;
    for _ in 0..INNER_MAX_PASSES {
        let mut max_delta = 0.0f64;
        for k in 0..p {
            if k == j || (!full_pass && beta[k] == 0.0) {
                continue;
            }
            let vkk = ws[k * p + k];
            let old = beta[k];
            let partial = rj[k] - (gs[k] - vkk * old);
            let new = soft(partial, lambda) / vkk;
            let delta = new - old;
            if delta != 0.0 {
                beta[k] = new;
                for (gi, wik) in gs.iter_mut().zip(&ws[k * p..(k + 1) * p]) {
                    *gi += wik * delta;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < INNER_TOL {
            if full_pass {
                break;
            }
            full_pass = true;
        } else {
            full_pass = false;
        }
    }
    g[j] = 0.0;
    g
}

/// Builds `K` from the column regressions:
/// `k_jj = 1 / (w_jj - w_{-j,j}ᵀ β_j)`, `k_{-j,j} = -β_j k_jj`,
/// then keeps the smaller-magnitude entry of each pair.
fn precision_from_betas(w: &DMatrix<f64>, betas: &DMatrix<f64>) -> SymmetricMatrix {
    let p = w.nrows();
    let mut raw = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut dot = 0.0;
        for k in 0..p {
            if k != j {
                dot += w[(k, j)] * betas[(k, j)];
            }
        }
        let kjj = 1.0 / (w[(j, j)] - dot);
        raw[(j, j)] = kjj;
        for k in 0..p {
            if k != j {
                raw[(k, j)] = -betas[(k, j)] * kjj;
            }
        }
    }
    crate::clime::symmetrize_min_abs(&raw)
}

/// Moves `w` (positive definite, unit diagonal) toward `r` just enough that
/// `|w_ij - r_ij| <= λ` off the diagonal. The block updates keep `w`
/// positive definite only from a dual-feasible start.
fn feasible_start(w: DMatrix<f64>, r: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let dev = (&w - r).amax();
    if dev <= lambda {
        return w;
    }
    let s = lambda / dev;
    w * s + r * (1.0 - s)
}

/// Graphical lasso on a unit-diagonal matrix `r`, starting from `K = I`.
pub fn glasso_corr(r: &SymmetricMatrix, cfg: &SpiceConfig) -> Result<GlassoFit> {
    glasso_corr_warm(r, cfg, None)
}

/// As [`glasso_corr`], optionally starting from an earlier solution (for
/// example the fit at a neighbouring λ2).
pub fn glasso_corr_warm(
    r: &SymmetricMatrix,
    cfg: &SpiceConfig,
    warm: Option<&GlassoFit>,
) -> Result<GlassoFit> {
    cfg.validate()?;
    let p = r.dim();
    if let Some(i) = r.diagonal().iter().position(|d| (d - 1.0).abs() > 1e-12) {
        return Err(Error::BadInput(format!(
            "correlation matrix diagonal entry {i} is {} (expected 1)",
            r.get(i, i)
        )));
    }
    let lambda = cfg.lambda2;
    let rm = r.as_matrix();
    let (w0, mut betas) = match warm {
        Some(fit) if fit.k.dim() == p => (fit.w.as_matrix().clone(), fit.betas.clone()),
        _ => (DMatrix::identity(p, p), DMatrix::zeros(p, p)),
    };
    let mut w = feasible_start(w0, rm, lambda);

    let mut history = Vec::new();
    let mut gap = f64::INFINITY;
    for sweep in 1..=cfg.max_iter {
        for j in 0..p {
            let mut beta = betas.column(j).into_owned();
            let g = lasso_column(&w, rm, j, lambda, &mut beta);
            for i in 0..p {
                if i != j {
                    w[(i, j)] = g[i];
                    w[(j, i)] = g[i];
                }
            }
            betas.set_column(j, &beta);
        }
        let k = precision_from_betas(&w, &betas);
        let w_sym = SymmetricMatrix::from_near_symmetric(w.clone())?;
        let primal = spice_objective(&k, r, lambda);
        history.push(primal);
        gap = match w_sym.log_det_pd() {
            Some(ld) => primal - (ld + p as f64),
            None => f64::INFINITY,
        };
        if gap.abs() < cfg.tol && kkt_violation(&k, r, lambda) <= cfg.tol {
            return Ok(GlassoFit {
                k,
                w: w_sym,
                betas,
                iterations: sweep,
                duality_gap: gap,
                objective_history: history,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual: gap,
    })
}

#[derive(Debug, Clone)]
pub struct SpiceFit {
    pub omega: SymmetricMatrix,
    pub glasso: GlassoFit,
    pub lambda2: f64,
}

fn rescale(k: &SymmetricMatrix, sd: &[f64]) -> Result<SymmetricMatrix> {
    k.map_entries(|i, j, v| v / (sd[i] * sd[j]))
}

fn standard_deviations(sigma_hat: &SymmetricMatrix) -> Result<Vec<f64>> {
    let diag = sigma_hat.diagonal();
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroVariance(i));
    }
    Ok(diag.iter().map(|v| v.sqrt()).collect())
}

/// SPICE estimate of the precision matrix from a covariance estimate.
pub fn spice_estimate(sigma_hat: &SymmetricMatrix, cfg: &SpiceConfig) -> Result<SpiceFit> {
    let sd = standard_deviations(sigma_hat)?;
    let r = correlation_from_covariance(sigma_hat)?;
    let glasso = glasso_corr(&r, cfg)?;
    Ok(SpiceFit {
        omega: rescale(&glasso.k, &sd)?,
        glasso,
        lambda2: cfg.lambda2,
    })
}

/// SPICE estimates along a λ2 path (solved from the largest value down with
/// warm starts); results follow the order of `lambdas`. `cfg.lambda2` is
/// ignored.
pub fn spice_path(
    sigma_hat: &SymmetricMatrix,
    lambdas: &[f64],
    cfg: &SpiceConfig,
) -> Result<Vec<Result<SpiceFit>>> {
    for &l in lambdas {
        SpiceConfig { lambda2: l, ..*cfg }.validate()?;
    }
    let sd = standard_deviations(sigma_hat)?;
    let r = correlation_from_covariance(sigma_hat)?;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[j].total_cmp(&lambdas[i]));
    let mut out: Vec<Option<Result<SpiceFit>>> = vec![None; lambdas.len()];
    let mut warm: Option<GlassoFit> = None;
    for li in order {
        let c = SpiceConfig {
            lambda2: lambdas[li],
            ..*cfg
        };
        let res = glasso_corr_warm(&r, &c, warm.as_ref()).and_then(|g| {
            Ok(SpiceFit {
                omega: rescale(&g.k, &sd)?,
                glasso: g,
                lambda2: lambdas[li],
            })
        });
        if let Ok(fit) = &res {
            warm = Some(fit.glasso.clone());
        }
        out[li] = Some(res);
    }
    Ok(out.into_iter().map(|r| r.expect("filled")).collect())
}

/// `-ω_ij / sqrt(ω_ii ω_jj)` off the diagonal, 1 on it.
pub fn partial_correlations(omega: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let diag = omega.diagonal();
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::BadDiagonal(i));
    }
    omega.map_entries(|i, j, v| {
        if i == j {
            1.0
        } else if v == 0.0 {
            0.0
        } else {
            -v / (diag[i] * diag[j]).sqrt()
        }
    })
}
