//! Cross-validation for the tuning parameters.
//!
//! The gap-block plan keeps a buffer between training and validation
//! columns so that, under temporal dependence, the two sets are nearly
//! uncorrelated:
//!
//! 1. the columns are cut into `h1` contiguous blocks; each block is a
//!    validation set and the training set is everything except the block
//!    and its neighbouring blocks;
//! 2. `h2` further validation blocks of `⌈n/h1⌉` consecutive columns start at
//!    random positions; their training sets drop `⌈n/h1⌉` columns on either
//!    side.
//!
//! An ordinary shuffled k-fold plan is also provided for i.i.d. data.
//! Losses are averaged uniformly over all splits and ties go to the smallest
//! tuning value.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clime::{clime_path, ClimeConfig};
use crate::error::{Error, Result};
use crate::linalg::{NormKind, SymmetricMatrix};
use crate::moments::{correlation_from_covariance, sample_covariance, TimeSeriesPanel};
use crate::simulate::stream_rng;
use crate::spice::{spice_path, SpiceConfig};
use crate::threshold::{threshold_correlation, threshold_covariance, ThresholdRule};

pub const DEFAULT_H1: usize = 10;
pub const DEFAULT_H2: usize = 10;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_GRID_LEN: usize = 20;
pub const DEFAULT_GRID_LO: f64 = 0.01;
pub const DEFAULT_GRID_HI: f64 = 1.0;
/// RNG stream reserved for drawing plans.
const PLAN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Fixed contiguous block (step 1).
    Block,
    /// Randomly placed block (step 2).
    RandomBlock,
    /// Shuffled fold.
    Fold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub kind: SplitKind,
    /// Sorted column indices.
    pub validation: Vec<usize>,
    /// Sorted column indices.
    pub training: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PlanScheme {
    GapBlock { h1: usize, h2: usize },
    KFold { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n: usize,
    pub scheme: PlanScheme,
    pub seed: u64,
    pub splits: Vec<Split>,
}

pub type GapBlockPlan = CvPlan;

fn complement(n: usize, excluded: std::ops::Range<usize>) -> Vec<usize> {
    (0..n).filter(|t| !excluded.contains(t)).collect()
}

/// Gap-block plan with `h1` fixed and `h2` random validation blocks.
pub fn make_plan(n: usize, h1: usize, h2: usize, seed: u64) -> Result<CvPlan> {
    if h1 < 4 {
        return Err(Error::BadParam(format!("h1 must be >= 4, got {h1}")));
    }
    if n < 4 * h1 {
        return Err(Error::TooSmall { n, h1 });
    }
    let bounds: Vec<usize> = (0..=h1).map(|i| i * n / h1).collect();
    let mut splits = Vec::with_capacity(h1 + h2);
    for i in 0..h1 {
        let lo = bounds[i.saturating_sub(1)];
        let hi = bounds[(i + 2).min(h1)];
        splits.push(Split {
            kind: SplitKind::Block,
            validation: (bounds[i]..bounds[i + 1]).collect(),
            training: complement(n, lo..hi),
        });
    }
    let len = n.div_ceil(h1);
    let mut rng = stream_rng(seed, PLAN_STREAM);
    for _ in 0..h2 {
        let start = rng.random_range(0..=n - len);
        let lo = start.saturating_sub(len);
        let hi = (start + 2 * len).min(n);
        splits.push(Split {
            kind: SplitKind::RandomBlock,
            validation: (start..start + len).collect(),
            training: complement(n, lo..hi),
        });
    }
    Ok(CvPlan {
        n,
        scheme: PlanScheme::GapBlock { h1, h2 },
        seed,
        splits,
    })
}

/// Ordinary k-fold plan over a seeded shuffle of the columns.
pub fn kfold_plan(n: usize, folds: usize, seed: u64) -> Result<CvPlan> {
    if folds < 2 {
        return Err(Error::BadParam(format!("need at least 2 folds, got {folds}")));
    }
    if n < 2 * folds {
        return Err(Error::TooSmall { n, h1: folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, PLAN_STREAM));
    let splits = (0..folds)
        .map(|k| {
            let mut validation: Vec<usize> = order.iter().skip(k).step_by(folds).copied().collect();
            validation.sort_unstable();
            let mut in_val = vec![false; n];
            for &t in &validation {
                in_val[t] = true;
            }
            Split {
                kind: SplitKind::Fold,
                validation,
                training: (0..n).filter(|&t| !in_val[t]).collect(),
            }
        })
        .collect();
    Ok(CvPlan {
        n,
        scheme: PlanScheme::KFold { folds },
        seed,
        splits,
    })
}

/// Candidate tuning values, strictly increasing and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    values: Vec<f64>,
}

impl TuningGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::BadParam("tuning grid is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::BadParam("tuning values must be finite and nonnegative".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParam("tuning grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn log_spaced(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || len == 0 {
            return Err(Error::BadParam(format!("bad log grid [{lo}, {hi}] x {len}")));
        }
        if len == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        Self::new(
            (0..len)
                .map(|i| (a + (b - a) * i as f64 / (len - 1) as f64).exp())
                .collect(),
        )
    }

    /// 20 log-spaced values on `[0.01, 1]`.
    pub fn default_grid() -> Self {
        Self::log_spaced(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_LEN).expect("valid default grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Covariance,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub selected: f64,
    /// `(value, mean loss)` per grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
    /// (split, value) pairs whose estimate was unusable; each contributes an
    /// infinite loss.
    pub skipped: Vec<(usize, f64)>,
}

fn argmin_smallest(grid: &TuningGrid, losses: &[f64]) -> Result<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &l) in losses.iter().enumerate() {
        if l.is_finite() && best.is_none_or(|(_, b)| l < b) {
            best = Some((k, l));
        }
    }
    best.map(|(k, _)| grid.values()[k])
        .ok_or_else(|| Error::DegenerateInput("no tuning value has a finite cross-validation loss".into()))
}

fn split_moments(x: &TimeSeriesPanel, split: &Split) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let train = sample_covariance(&x.select_columns(&split.training)?)?;
    let valid = sample_covariance(&x.select_columns(&split.validation)?)?;
    Ok((train, valid))
}

/// Mean over splits, reduced in split order.
fn average(per_split: &[Vec<f64>], len: usize) -> Vec<f64> {
    let h = per_split.len() as f64;
    (0..len)
        .map(|k| per_split.iter().map(|row| row[k]).sum::<f64>() / h)
        .collect()
}

/// Chooses the threshold minimizing the mean squared Frobenius distance
/// between the thresholded training moment and the validation moment.
pub fn select_tau(
    x: &TimeSeriesPanel,
    plan: &CvPlan,
    grid: &TuningGrid,
    rule: ThresholdRule,
    target: Target,
) -> Result<CvResult> {
    rule.validate()?;
    let per_split: Vec<Vec<f64>> = plan
        .splits
        .par_iter()
        .map(|split| {
            let (mut train, mut valid) = split_moments(x, split)?;
            if target == Target::Correlation {
                train = correlation_from_covariance(&train)?;
                valid = correlation_from_covariance(&valid)?;
            }
            grid.values()
                .iter()
                .map(|&tau| {
                    let est = match target {
                        Target::Covariance => threshold_covariance(&train, tau, rule)?,
                        Target::Correlation => threshold_correlation(&train, tau, rule)?,
                    };
                    Ok(est.sub(&valid)?.norm(NormKind::Frobenius).powi(2))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let losses = average(&per_split, grid.values().len());
    Ok(CvResult {
        selected: argmin_smallest(grid, &losses)?,
        curve: grid.values().iter().copied().zip(losses).collect(),
        skipped: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PrecisionMethod {
    /// `lambda1` in the config is replaced by each grid value; an automatic
    /// `ε` is resolved from the training-set size.
    Clime(ClimeConfig),
    /// `lambda2` in the config is replaced by each grid value.
    Spice(SpiceConfig),
}

/// `tr(Ω S) - log det Ω`, or `None` when `Ω` is not positive definite.
pub fn likelihood_loss(omega: &SymmetricMatrix, s: &SymmetricMatrix) -> Option<f64> {
    let ld = omega.log_det_pd()?;
    let tr: f64 = omega.as_matrix().component_mul(s.as_matrix()).sum();
    Some(tr - ld)
}

/// Chooses the penalty minimizing the mean validation negative
/// log-likelihood of the training-set precision estimate.
pub fn select_lambda_precision(
    x: &TimeSeriesPanel,
    plan: &CvPlan,
    grid: &TuningGrid,
    method: PrecisionMethod,
) -> Result<CvResult> {
    let lambdas = grid.values();
    if lambdas[0] <= 0.0 {
        return Err(Error::BadParam("precision penalties must be positive".into()));
    }
    let per_split: Vec<Vec<f64>> = plan
        .splits
        .par_iter()
        .map(|split| {
            let (train, valid) = split_moments(x, split)?;
            let fits: Vec<Option<SymmetricMatrix>> = match method {
                PrecisionMethod::Clime(cfg) => clime_path(&train, Some(split.training.len()), lambdas, &cfg)?
                    .into_iter()
                    .map(|r| r.ok().map(|f| f.omega))
                    .collect(),
                PrecisionMethod::Spice(cfg) => spice_path(&train, lambdas, &cfg)?
                    .into_iter()
                    .map(|r| r.ok().map(|f| f.omega))
                    .collect(),
            };
            Ok(fits
                .iter()
                .map(|f| {
                    f.as_ref()
                        .and_then(|omega| likelihood_loss(omega, &valid))
                        .unwrap_or(f64::INFINITY)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut skipped = Vec::new();
    for (s, row) in per_split.iter().enumerate() {
        for (k, l) in row.iter().enumerate() {
            if !l.is_finite() {
                skipped.push((s, lambdas[k]));
            }
        }
    }
    let losses = average(&per_split, lambdas.len());
    Ok(CvResult {
        selected: argmin_smallest(grid, &losses)?,
        curve: lambdas.iter().copied().zip(losses).collect(),
        skipped,
    })
}
