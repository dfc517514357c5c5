//! Generalized thresholding rules and thresholded covariance/correlation
//! estimators.
//!
//! Every rule `s_τ` satisfies, for all `z` and `τ >= 0`:
//! `|s_τ(z)| <= |z|`, `s_τ(z) = 0` when `|z| <= τ`, and `|s_τ(z) - z| <= τ`.
//! The covariance estimator thresholds every entry, the diagonal included;
//! the correlation estimator keeps a unit diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_ALASSO_ETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Hard,
    Soft,
    Scad { a: f64 },
    AdaptiveLasso { eta: f64 },
}

impl ThresholdRule {
    pub fn scad() -> Self {
        ThresholdRule::Scad { a: DEFAULT_SCAD_A }
    }

    pub fn adaptive_lasso() -> Self {
        ThresholdRule::AdaptiveLasso {
            eta: DEFAULT_ALASSO_ETA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdRule::Scad { a } if !(a > 2.0) => {
                Err(Error::BadParam(format!("SCAD parameter a = {a} must exceed 2")))
            }
            ThresholdRule::AdaptiveLasso { eta } if !(eta >= 1.0) => Err(Error::BadParam(
                format!("adaptive lasso eta = {eta} must be >= 1"),
            )),
            _ => Ok(()),
        }
    }

    /// Parses `hard|soft|scad|alasso` with the given shape parameters.
    pub fn parse(name: &str, scad_a: f64, alasso_eta: f64) -> Result<Self> {
        let rule = match name {
            "hard" => ThresholdRule::Hard,
            "soft" => ThresholdRule::Soft,
            "scad" => ThresholdRule::Scad { a: scad_a },
            "alasso" | "adaptive_lasso" => ThresholdRule::AdaptiveLasso { eta: alasso_eta },
            other => return Err(Error::BadParam(format!("unknown threshold rule '{other}'"))),
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdRule::Hard => "hard",
            ThresholdRule::Soft => "soft",
            ThresholdRule::Scad { .. } => "scad",
            ThresholdRule::AdaptiveLasso { .. } => "alasso",
        }
    }

    /// Applies the rule without parameter validation.
    pub(crate) fn apply(&self, z: f64, tau: f64) -> f64 {
        let abs = z.abs();
        if abs <= tau {
            return 0.0;
        }
        match *self {
            ThresholdRule::Hard => z,
            ThresholdRule::Soft => z.signum() * (abs - tau),
            ThresholdRule::Scad { a } => {
                if abs <= 2.0 * tau {
                    z.signum() * (abs - tau)
                } else if abs <= a * tau {
                    ((a - 1.0) * z - z.signum() * a * tau) / (a - 2.0)
                } else {
                    z
                }
            }
            ThresholdRule::AdaptiveLasso { eta } => {
                let shrink = tau.powf(eta + 1.0) * abs.powf(-eta);
                z.signum() * (abs - shrink).max(0.0)
            }
        }
    }
}

pub fn threshold_value(z: f64, tau: f64, rule: ThresholdRule) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::BadParam(format!("tau = {tau} must be nonnegative")));
    }
    rule.validate()?;
    Ok(rule.apply(z, tau))
}

/// `S_τ(Σ̂)`: the rule applied to every entry, diagonal included.
pub fn threshold_covariance(
    s: &SymmetricMatrix,
    tau: f64,
    rule: ThresholdRule,
) -> Result<SymmetricMatrix> {
    threshold_value(0.0, tau, rule)?;
    s.map_entries(|_, _, v| rule.apply(v, tau))
}

/// `S_τ(R̂)`: off-diagonal entries thresholded, diagonal pinned to 1.
pub fn threshold_correlation(
    r: &SymmetricMatrix,
    tau: f64,
    rule: ThresholdRule,
) -> Result<SymmetricMatrix> {
    threshold_value(0.0, tau, rule)?;
    if let Some(i) = r.diagonal().iter().position(|d| (d - 1.0).abs() > 1e-12) {
        return Err(Error::BadInput(format!(
            "correlation matrix diagonal entry {i} is {} (expected 1)",
            r.get(i, i)
        )));
    }
    r.map_entries(|i, j, v| if i == j { 1.0 } else { rule.apply(v, tau) })
}
