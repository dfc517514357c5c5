//! Rate expressions and diagnostics for the polynomial-decay-dominated
//! dependence class, where the lag-`h` cross-correlation matrices satisfy
//! `|R^{t,t+h}|_∞ <= C0 h^{-α}`.
//!
//! The rate functions return the bare rate expression; the theory constants
//! in front of them are not modeled.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{NormKind, SymmetricMatrix};
use crate::moments::{sample_autocorrelation, TimeSeriesPanel};

/// Largest dimension accepted by [`irrepresentability`] (`Γ` is `p² x p²`).
pub const MAX_IRREP_DIM: usize = 50;
/// Autocorrelations below this magnitude are dropped from the log-log fit.
const MIN_ABS_RHO: f64 = 1e-8;

/// Temporal decay exponent; `Infinite` is the i.i.d. case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Finite(f64),
    Infinite,
}

impl Alpha {
    pub fn validate(self) -> Result<Self> {
        match self {
            Alpha::Finite(a) if !(a > 0.0 && a.is_finite()) => {
                Err(Error::BadParam(format!("alpha must be positive, got {a}")))
            }
            other => Ok(other),
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Alpha::Finite(a) => Some(a),
            Alpha::Infinite => None,
        }
    }

    pub fn is_iid(self) -> bool {
        self == Alpha::Infinite
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Infinite => f.write_str("iid"),
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "iid" => Ok(Alpha::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("alpha: expected a number, `inf` or `iid`, got `{s}`")))
                .and_then(|a| {
                    if a == f64::INFINITY {
                        Ok(Alpha::Infinite)
                    } else {
                        Alpha::Finite(a).validate()
                    }
                }),
        }
    }
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Alpha::Finite(a) => s.serialize_f64(*a),
            Alpha::Infinite => s.serialize_str("iid"),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let alpha = match Raw::deserialize(d)? {
            Raw::Num(a) => Alpha::Finite(a).validate(),
            Raw::Str(s) => s.parse(),
        };
        alpha.map_err(serde::de::Error::custom)
    }
}

/// Decay class parameters: exponent and constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PddSpec {
    pub alpha: f64,
    pub c0: f64,
}

impl PddSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::BadParam(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::BadParam(format!("c0 must be positive, got {}", self.c0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInput {
    pub n: usize,
    pub p: usize,
    pub alpha: Alpha,
    /// Bound on `‖Ω‖_1`; only used by the precision-matrix expressions.
    pub m_p: f64,
}

impl RateInput {
    pub fn new(n: usize, p: usize, alpha: Alpha) -> Self {
        Self { n, p, alpha, m_p: 1.0 }
    }

    pub fn with_mp(self, m_p: f64) -> Self {
        Self { m_p, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 2 {
            return Err(Error::BadInput(format!(
                "rates need n >= 2 and p >= 2, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if !(self.m_p >= 1.0 && self.m_p.is_finite()) {
            return Err(Error::BadInput(format!("m_p must be >= 1, got {}", self.m_p)));
        }
        self.alpha.validate().map_err(|e| Error::BadInput(e.to_string()))?;
        Ok(())
    }
}

/// Rate for the thresholded covariance/correlation estimators.
pub fn tau_prime(inp: &RateInput) -> Result<f64> {
    lambda_prime(&inp.with_mp(1.0))
}

/// Rate for CLIME; coincides with [`tau_prime`] when `m_p = 1`.
pub fn lambda_prime(inp: &RateInput) -> Result<f64> {
    inp.validate()?;
    let n = inp.n as f64;
    let lp = (inp.p as f64).ln();
    let ln = n.ln();
    let lm = inp.m_p.ln();
    let Some(a) = inp.alpha.finite() else {
        return Ok((lp / n).sqrt());
    };
    let v = if a < 1.0 {
        inp.m_p.powf(2.0 / 3.0)
            * n.powf(-a / 3.0)
            * lp.powf(-1.0 / 6.0)
            * (lp + (1.0 - 2.0 * a / 3.0) * ln + 4.0 / 3.0 * lm).sqrt()
    } else if a == 1.0 {
        inp.m_p.powf(2.0 / 3.0)
            * n.powf(-1.0 / 3.0)
            * lp.powf(-1.0 / 6.0)
            * (lp + ln / 3.0 + 4.0 / 3.0 * lm).sqrt()
            * ln.powf(1.0 / 3.0)
    } else {
        let k = 1.0 + 2.0 * a;
        inp.m_p.powf(2.0 / k)
            * n.powf(-a / k)
            * lp.powf(-1.0 / (2.0 * k))
            * (lp + ln / k + 4.0 / k * lm).sqrt()
    };
    Ok(v)
}

/// Unrounded block size `f` (thresholding form, i.e. without the `M_p` factor).
fn base_block_size(n: f64, lp: f64, alpha: Alpha) -> f64 {
    match alpha.finite() {
        None => 1.0,
        Some(a) if a < 1.0 => n.powf(1.0 - 2.0 * a / 3.0) * lp.powf(-1.0 / 3.0),
        Some(a) if a == 1.0 => (n * n.ln().powi(2)).cbrt() * lp.powf(-1.0 / 3.0),
        Some(a) => {
            let k = 1.0 + 2.0 * a;
            n.powf(1.0 / k) * lp.powf(-1.0 / k)
        }
    }
}

/// Block size `f` balancing the within-block and between-block terms,
/// rounded to the nearest integer and clamped below at 1. With `for_clime`
/// the thresholding value is scaled by `M_p^{4/3}` (`α <= 1`) or
/// `M_p^{4/(1+2α)}` (`α > 1`).
pub fn block_size_f(inp: &RateInput, for_clime: bool) -> Result<usize> {
    inp.validate()?;
    let n = inp.n as f64;
    let mut f = base_block_size(n, (inp.p as f64).ln(), inp.alpha);
    if for_clime {
        let exponent = match inp.alpha.finite() {
            Some(a) if a <= 1.0 => 4.0 / 3.0,
            Some(a) => 4.0 / (1.0 + 2.0 * a),
            None => 0.0,
        };
        f *= inp.m_p.powf(exponent);
    }
    let rounded = f.round().max(1.0);
    if rounded > n {
        return Err(Error::OutOfRange { value: f, lo: 1.0, hi: n });
    }
    Ok(rounded as usize)
}

/// Dependence budget `g` for blocks of size `f`: an integral bound on
/// `2 C0 Σ_{k=1}^{⌊n/f⌋} (k f)^{-α}`.
pub fn g_bound(n: usize, f: usize, spec: &PddSpec) -> Result<f64> {
    spec.validate().map_err(|e| Error::BadInput(e.to_string()))?;
    if f < 1 || f > n {
        return Err(Error::BadInput(format!("block size {f} outside [1, {n}]")));
    }
    let (nf, ff, a) = (n as f64, f as f64, spec.alpha);
    let ratio = nf / ff;
    let v = if a == 1.0 {
        2.0 * spec.c0 / ff * (1.0 + ratio.ln())
    } else {
        2.0 * spec.c0 * ff.powf(-a) * (ratio.powf(1.0 - a) - a) / (1.0 - a)
    };
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// One fit per series; the summary is the average over series.
    PerSeries,
    /// One fit to the lagwise maximum of `|ρ̂_i(t)|` over series.
    Envelope,
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_series" | "per-series" => Ok(AlphaMode::PerSeries),
            "envelope" => Ok(AlphaMode::Envelope),
            other => Err(Error::Parse(format!("unknown alpha-fit mode `{other}`"))),
        }
    }
}

/// `|ρ(t)| ≈ c t^{-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub alpha: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub c: f64,
    /// Individual fits (per-series mode only).
    pub per_series: Vec<PowerLaw>,
}

/// Least-squares fit of `log|ρ(t)| = log c - α log t` over `t = 1..`, where
/// `rho[t]` is the lag-`t` value (`rho[0]` is ignored).
pub fn fit_power_law(rho: &[f64]) -> Result<PowerLaw> {
    let pts: Vec<(f64, f64)> = rho
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, r)| r.is_finite() && r.abs() >= MIN_ABS_RHO)
        .map(|(t, r)| ((t as f64).ln(), r.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::TooFewLags { usable: pts.len() });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(PowerLaw {
        alpha: -slope,
        c: (my - slope * mx).exp(),
    })
}

pub fn estimate_alpha(x: &TimeSeriesPanel, max_lag: usize, mode: AlphaMode) -> Result<AlphaEstimate> {
    if max_lag < 3 {
        return Err(Error::BadLag { lag: max_lag, n: x.n() });
    }
    let acfs = (0..x.p())
        .map(|i| {
            sample_autocorrelation(&x.series(i), max_lag).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::ZeroVariance(i),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match mode {
        AlphaMode::Envelope => {
            let env: Vec<f64> = (0..=max_lag)
                .map(|t| acfs.iter().map(|r| r[t].abs()).fold(0.0, f64::max))
                .collect();
            let fit = fit_power_law(&env)?;
            Ok(AlphaEstimate {
                alpha: fit.alpha,
                c: fit.c,
                per_series: Vec::new(),
            })
        }
        AlphaMode::PerSeries => {
            let fits = acfs
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    fit_power_law(r).map_err(|e| Error::Column {
                        index: i,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let k = fits.len() as f64;
            Ok(AlphaEstimate {
                alpha: fits.iter().map(|f| f.alpha).sum::<f64>() / k,
                c: (fits.iter().map(|f| f.c.ln()).sum::<f64>() / k).exp(),
                per_series: fits,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Irrepresentability {
    /// `1 - max_{e ∉ S} |Γ_eS Γ_SS^{-1}|_1`; the condition holds when positive.
    pub beta: f64,
    /// `‖R‖_1`
    pub kappa_r: f64,
    /// `‖Γ_SS^{-1}‖_1`
    pub kappa_gamma: f64,
    /// Largest number of nonzeros in a row of `Ω`.
    pub d: usize,
}

/// Index pairs `(i, j)` with `|ω_ij| > tol`, diagonal included.
pub fn support_of(omega: &SymmetricMatrix, tol: f64) -> Vec<(usize, usize)> {
    let p = omega.dim();
    let mut s = Vec::new();
    for j in 0..p {
        for i in 0..p {
            if i == j || omega.get(i, j).abs() > tol {
                s.push((i, j));
            }
        }
    }
    s
}

/// Irrepresentability diagnostics for `Γ = R ⊗ R`, with pair `(i, j)` stored
/// at vector position `i + j p`. The support is closed under transposition
/// and always contains the diagonal.
pub fn irrepresentability(r: &SymmetricMatrix, support: &[(usize, usize)]) -> Result<Irrepresentability> {
    let p = r.dim();
    if p > MAX_IRREP_DIM {
        return Err(Error::TooLarge(format!(
            "irrepresentability needs p <= {MAX_IRREP_DIM}, got {p}"
        )));
    }
    let mut in_s = vec![false; p * p];
    for &(i, j) in support {
        if i >= p || j >= p {
            return Err(Error::BadInput(format!("support pair ({i}, {j}) out of range")));
        }
        in_s[i + j * p] = true;
        in_s[j + i * p] = true;
    }
    for i in 0..p {
        in_s[i + i * p] = true;
    }
    let s_idx: Vec<usize> = (0..p * p).filter(|&e| in_s[e]).collect();
    let c_idx: Vec<usize> = (0..p * p).filter(|&e| !in_s[e]).collect();
    let gamma = |e: usize, f: usize| r.get(e % p, f % p) * r.get(e / p, f / p);

    let s = s_idx.len();
    let g_ss = DMatrix::from_fn(s, s, |a, b| gamma(s_idx[a], s_idx[b]));
    let g_ss_inv = SymmetricMatrix::from_dense(g_ss)
        .and_then(|m| m.inverse())
        .map_err(|_| Error::SingularGammaSS)?;
    let kappa_gamma = g_ss_inv.norm(NormKind::L1);

    let mut worst = 0.0f64;
    if !c_idx.is_empty() {
        let g_cs = DMatrix::from_fn(c_idx.len(), s, |a, b| gamma(c_idx[a], s_idx[b]));
        let prod = g_cs * g_ss_inv.as_matrix();
        for row in prod.row_iter() {
            worst = worst.max(row.iter().map(|v| v.abs()).sum());
        }
    }
    let d = (0..p)
        .map(|i| (0..p).filter(|&j| in_s[i + j * p]).count())
        .max()
        .unwrap_or(0);
    Ok(Irrepresentability {
        beta: 1.0 - worst,
        kappa_r: r.norm(NormKind::L1),
        kappa_gamma,
        d,
    })
}
