//! Replication harness and evaluation metrics.
//!
//! Each replication simulates a panel, selects tuning parameters by
//! cross-validation, fits every requested method and scores it against the
//! model truth. Replications own independent RNG streams and results are
//! reduced in replication order, so output does not depend on the thread
//! count.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::clime::{clime_estimate, ClimeConfig};
use crate::crossval::{
    kfold_plan, make_plan, select_lambda_precision, select_tau, CvPlan, PrecisionMethod, Target,
    TuningGrid, DEFAULT_FOLDS, DEFAULT_H1, DEFAULT_H2,
};
use crate::error::{Error, Result};
use crate::linalg::{NormKind, SymmetricMatrix};
use crate::moments::{correlation_from_covariance, sample_correlation, sample_covariance, TimeSeriesPanel};
use crate::pdd_rates::Alpha;
use crate::simulate::{build_model, fit_exp_sum, simulate_iid, simulate_mixture, stream_rng, ExpSumFit, ModelSpec};
use crate::spice::{spice_estimate, SpiceConfig};
use crate::threshold::{threshold_correlation, ThresholdRule, DEFAULT_ALASSO_ETA, DEFAULT_SCAD_A};

/// Share of failed replications (per method) that aborts a run.
pub const ABORT_FRACTION: f64 = 0.2;
/// Term counts tried in turn when the exponential-sum size is automatic.
const AUTO_TERMS: [usize; 5] = [8, 10, 12, 14, 16];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub spectral_loss: f64,
    pub frobenius_loss: f64,
    pub max_loss: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub sign_consistent: Option<bool>,
}

/// Scores `estimate` against `truth`. Support metrics use off-diagonal
/// entries, exact zeros, and are reported only when `support_metrics` is
/// set and the truth has both zero and nonzero off-diagonal entries.
pub fn evaluate(estimate: &SymmetricMatrix, truth: &SymmetricMatrix, support_metrics: bool) -> Result<EvalReport> {
    let diff = estimate.sub(truth)?;
    let p = truth.dim();
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    let mut signs_ok = true;
    for i in 0..p {
        for j in 0..p {
            let (e, t) = (estimate.get(i, j), truth.get(i, j));
            if t != 0.0 && (e == 0.0 || e.signum() != t.signum()) {
                signs_ok = false;
            }
            if i == j {
                continue;
            }
            if t != 0.0 {
                pos += 1;
                tp += usize::from(e != 0.0);
            } else {
                neg += 1;
                fp += usize::from(e != 0.0);
            }
        }
    }
    let support = support_metrics && pos > 0 && neg > 0;
    Ok(EvalReport {
        spectral_loss: diff.norm(NormKind::Spectral),
        frobenius_loss: diff.norm(NormKind::Frobenius),
        max_loss: diff.norm(NormKind::ElemInf),
        tpr: support.then(|| tp as f64 / pos as f64),
        fpr: support.then(|| fp as f64 / neg as f64),
        sign_consistent: support.then_some(signs_ok),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Sample correlation matrix.
    Sample,
    Hard,
    Soft,
    Scad,
    Alasso,
    /// Inverse of the sample covariance; unavailable when singular.
    SampleInverse,
    Clime,
    Spice,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sample => "sample",
            Method::Hard => "hard",
            Method::Soft => "soft",
            Method::Scad => "scad",
            Method::Alasso => "alasso",
            Method::SampleInverse => "sample_inverse",
            Method::Clime => "clime",
            Method::Spice => "spice",
        }
    }

    pub fn estimates_precision(self) -> bool {
        matches!(self, Method::SampleInverse | Method::Clime | Method::Spice)
    }

    fn rule(self, scad_a: f64, alasso_eta: f64) -> Option<ThresholdRule> {
        match self {
            Method::Hard => Some(ThresholdRule::Hard),
            Method::Soft => Some(ThresholdRule::Soft),
            Method::Scad => Some(ThresholdRule::Scad { a: scad_a }),
            Method::Alasso => Some(ThresholdRule::AdaptiveLasso { eta: alasso_eta }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    /// k-fold for i.i.d. data, gap-block otherwise.
    Auto,
    GapBlock,
    KFold,
}

fn de_h1<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    let h1 = usize::deserialize(d)?;
    if h1 < 4 {
        return Err(serde::de::Error::custom(format!("h1 must be >= 4, got {h1}")));
    }
    Ok(h1)
}

fn de_replications<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    let r = usize::deserialize(d)?;
    if r == 0 {
        return Err(serde::de::Error::custom("replications must be >= 1"));
    }
    Ok(r)
}

fn d_reps() -> usize {
    20
}
fn d_h1() -> usize {
    DEFAULT_H1
}
fn d_h2() -> usize {
    DEFAULT_H2
}
fn d_folds() -> usize {
    DEFAULT_FOLDS
}
fn d_scheme() -> CvScheme {
    CvScheme::Auto
}
fn d_fit_tol() -> f64 {
    crate::simulate::DEFAULT_FIT_TOL
}
fn d_clime_tol() -> f64 {
    1e-9
}
fn d_clime_iter() -> usize {
    10_000
}
fn d_spice_tol() -> f64 {
    1e-5
}
fn d_spice_iter() -> usize {
    500
}
fn d_scad() -> f64 {
    DEFAULT_SCAD_A
}
fn d_alasso() -> f64 {
    DEFAULT_ALASSO_ETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub model: u8,
    pub p: usize,
    pub n: usize,
    pub alpha: Alpha,
    #[serde(default = "d_reps", deserialize_with = "de_replications")]
    pub replications: usize,
    /// Defaults to the correlation methods for Models 1/2 and the precision
    /// methods for Models 3/4.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_h1", deserialize_with = "de_h1")]
    pub h1: usize,
    #[serde(default = "d_h2")]
    pub h2: usize,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default = "d_scheme")]
    pub cv_scheme: CvScheme,
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Number of exponential terms; automatic when absent.
    #[serde(default)]
    pub exp_terms: Option<usize>,
    #[serde(default = "d_fit_tol")]
    pub fit_tol: f64,
    #[serde(default = "d_clime_tol")]
    pub clime_tol: f64,
    #[serde(default = "d_clime_iter")]
    pub clime_max_iter: usize,
    #[serde(default = "d_spice_tol")]
    pub spice_tol: f64,
    #[serde(default = "d_spice_iter")]
    pub spice_max_iter: usize,
    #[serde(default = "d_scad")]
    pub scad_a: f64,
    #[serde(default = "d_alasso")]
    pub alasso_eta: f64,
}

impl BenchConfig {
    pub fn new(model: u8, p: usize, n: usize, alpha: Alpha) -> Self {
        Self {
            model,
            p,
            n,
            alpha,
            replications: d_reps(),
            methods: None,
            seed: 0,
            h1: DEFAULT_H1,
            h2: DEFAULT_H2,
            folds: DEFAULT_FOLDS,
            cv_scheme: CvScheme::Auto,
            tau_grid: None,
            lambda_grid: None,
            exp_terms: None,
            fit_tol: d_fit_tol(),
            clime_tol: d_clime_tol(),
            clime_max_iter: d_clime_iter(),
            spice_tol: d_spice_tol(),
            spice_max_iter: d_spice_iter(),
            scad_a: DEFAULT_SCAD_A,
            alasso_eta: DEFAULT_ALASSO_ETA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ModelSpec::new(self.model, self.p).validate()?;
        self.alpha.validate()?;
        if self.replications == 0 {
            return Err(Error::BadParam("replications must be >= 1".into()));
        }
        if self.h1 < 4 {
            return Err(Error::BadParam(format!("h1 must be >= 4, got {}", self.h1)));
        }
        if self.methods.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::BadParam("methods list is empty".into()));
        }
        self.tau_grid()?;
        self.lambda_grid()?;
        self.clime_config(1.0).validate()?;
        self.spice_config(1.0).validate()?;
        for m in self.methods() {
            if let Some(rule) = m.rule(self.scad_a, self.alasso_eta) {
                rule.validate()?;
            }
        }
        self.plan(0)?;
        Ok(())
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| match self.model {
            1 | 2 => vec![Method::Sample, Method::Hard, Method::Soft, Method::Scad, Method::Alasso],
            _ => vec![Method::SampleInverse, Method::Clime, Method::Spice],
        })
    }

    fn grid(values: &Option<Vec<f64>>) -> Result<TuningGrid> {
        match values {
            Some(v) => TuningGrid::new(v.clone()),
            None => Ok(TuningGrid::default_grid()),
        }
    }

    pub fn tau_grid(&self) -> Result<TuningGrid> {
        Self::grid(&self.tau_grid)
    }

    pub fn lambda_grid(&self) -> Result<TuningGrid> {
        let g = Self::grid(&self.lambda_grid)?;
        if g.values()[0] <= 0.0 {
            return Err(Error::BadParam("lambda grid values must be positive".into()));
        }
        Ok(g)
    }

    pub fn clime_config(&self, lambda1: f64) -> ClimeConfig {
        ClimeConfig::new(lambda1).with_tolerance(self.clime_tol, self.clime_max_iter)
    }

    pub fn spice_config(&self, lambda2: f64) -> SpiceConfig {
        SpiceConfig {
            tol: self.spice_tol,
            max_iter: self.spice_max_iter,
            ..SpiceConfig::new(lambda2)
        }
    }

    /// Cross-validation plan for replication `rep`.
    pub fn plan(&self, rep: usize) -> Result<CvPlan> {
        let seed = self.seed.wrapping_add(rep as u64);
        let kfold = match self.cv_scheme {
            CvScheme::Auto => self.alpha.is_iid(),
            CvScheme::KFold => true,
            CvScheme::GapBlock => false,
        };
        if kfold {
            kfold_plan(self.n, self.folds, seed)
        } else {
            make_plan(self.n, self.h1, self.h2, seed)
        }
    }

    /// Exponential-sum fit for the configured dependence, `None` when i.i.d.
    pub fn exp_fit(&self) -> Result<Option<ExpSumFit>> {
        let Some(alpha) = self.alpha.finite() else {
            return Ok(None);
        };
        if let Some(k) = self.exp_terms {
            return fit_exp_sum(alpha, self.n, k, self.fit_tol).map(Some);
        }
        let mut last = None;
        for k in AUTO_TERMS {
            match fit_exp_sum(alpha, self.n, k, self.fit_tol) {
                Ok(fit) => return Ok(Some(fit)),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MethodOutcome {
    Scored { report: EvalReport, tuning: Option<f64> },
    /// Estimate undefined for this sample (singular sample covariance).
    NotAvailable,
    Failed(String),
}

fn fit_method(
    cfg: &BenchConfig,
    method: Method,
    x: &TimeSeriesPanel,
    plan: &CvPlan,
    truth_corr: &SymmetricMatrix,
    truth_prec: &SymmetricMatrix,
) -> MethodOutcome {
    let res: Result<(SymmetricMatrix, Option<f64>, &SymmetricMatrix)> = (|| match method {
        Method::Sample => Ok((sample_correlation(x)?, None, truth_corr)),
        Method::Hard | Method::Soft | Method::Scad | Method::Alasso => {
            let rule = method.rule(cfg.scad_a, cfg.alasso_eta).expect("threshold method");
            let cv = select_tau(x, plan, &cfg.tau_grid()?, rule, Target::Correlation)?;
            let est = threshold_correlation(&sample_correlation(x)?, cv.selected, rule)?;
            Ok((est, Some(cv.selected), truth_corr))
        }
        Method::SampleInverse => Ok((sample_covariance(x)?.inverse()?, None, truth_prec)),
        Method::Clime => {
            let cv = select_lambda_precision(x, plan, &cfg.lambda_grid()?, PrecisionMethod::Clime(cfg.clime_config(1.0)))?;
            let fit = clime_estimate(&sample_covariance(x)?, Some(x.n()), &cfg.clime_config(cv.selected))?;
            Ok((fit.omega, Some(cv.selected), truth_prec))
        }
        Method::Spice => {
            let cv = select_lambda_precision(x, plan, &cfg.lambda_grid()?, PrecisionMethod::Spice(cfg.spice_config(1.0)))?;
            let fit = spice_estimate(&sample_covariance(x)?, &cfg.spice_config(cv.selected))?;
            Ok((fit.omega, Some(cv.selected), truth_prec))
        }
    })();
    match res.and_then(|(est, tuning, truth)| Ok((evaluate(&est, truth, true)?, tuning))) {
        Ok((report, tuning)) => MethodOutcome::Scored { report, tuning },
        Err(Error::SingularMatrix { .. }) if method == Method::SampleInverse => MethodOutcome::NotAvailable,
        Err(e) => MethodOutcome::Failed(e.to_string()),
    }
}

/// Per-replication outcomes, one entry per method in `cfg.methods()` order.
pub fn run_replications(cfg: &BenchConfig) -> Result<Vec<Vec<MethodOutcome>>> {
    cfg.validate()?;
    let model = build_model(&ModelSpec::new(cfg.model, cfg.p))?;
    let truth_corr = correlation_from_covariance(&model.sigma)?;
    let fit = cfg.exp_fit()?;
    let methods = cfg.methods();
    Ok((0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let data = (|| {
                let mut rng = stream_rng(cfg.seed, rep as u64);
                let x = match &fit {
                    Some(f) => simulate_mixture(&model.sigma, f, cfg.n, &mut rng)?,
                    None => simulate_iid(&model.sigma, cfg.n, &mut rng)?,
                };
                Ok::<_, Error>((x, cfg.plan(rep)?))
            })();
            match data {
                Ok((x, plan)) => methods
                    .iter()
                    .map(|&m| fit_method(cfg, m, &x, &plan, &truth_corr, &model.omega))
                    .collect(),
                Err(e) => vec![MethodOutcome::Failed(e.to_string()); methods.len()],
            }
        })
        .collect())
}

/// Sum by recursive halving.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and sample standard deviation (divisor `k - 1`; NaN when `k < 2`).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (k - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub model: u8,
    pub p: usize,
    pub n: usize,
    pub alpha: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    /// Replications contributing a value.
    pub replications: usize,
    /// Replications where the method failed or was unavailable.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn get(&self, method: &str, metric: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    /// Methods as rows, metrics as `mean(sd)` columns.
    pub fn to_text(&self) -> String {
        let mut metrics: Vec<&str> = Vec::new();
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        let mut out = format!("{:<16}", "method");
        for m in &metrics {
            out.push_str(&format!("{m:>20}"));
        }
        out.push('\n');
        for meth in &methods {
            out.push_str(&format!("{meth:<16}"));
            for met in &metrics {
                let cell = match self.get(meth, met) {
                    Some(r) if r.replications > 0 => format!("{:.3}({:.3})", r.mean, r.sd),
                    _ => "N/A".to_string(),
                };
                out.push_str(&format!("{cell:>20}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates per-replication outcomes; aborts when any method fails in at
/// least [`ABORT_FRACTION`] of the replications.
pub fn aggregate(cfg: &BenchConfig, outcomes: &[Vec<MethodOutcome>]) -> Result<BenchTable> {
    let reps = outcomes.len();
    let mut rows = Vec::new();
    for (mi, method) in cfg.methods().into_iter().enumerate() {
        let column: Vec<&MethodOutcome> = outcomes.iter().map(|o| &o[mi]).collect();
        let failed: Vec<&String> = column
            .iter()
            .filter_map(|o| match o {
                MethodOutcome::Failed(e) => Some(e),
                _ => None,
            })
            .collect();
        if !failed.is_empty() && failed.len() as f64 >= ABORT_FRACTION * reps as f64 {
            return Err(Error::BenchAborted {
                failures: failed.len(),
                replications: reps,
                first: format!("{}: {}", method.name(), failed[0]),
            });
        }
        let scored: Vec<(&EvalReport, Option<f64>)> = column
            .iter()
            .filter_map(|o| match o {
                MethodOutcome::Scored { report, tuning } => Some((report, *tuning)),
                _ => None,
            })
            .collect();
        let failures = reps - scored.len();
        type Getter = fn(&EvalReport, Option<f64>) -> Option<f64>;
        let metrics: [(&str, Getter); 7] = [
            ("spectral", |r, _| Some(r.spectral_loss)),
            ("frobenius", |r, _| Some(r.frobenius_loss)),
            ("max", |r, _| Some(r.max_loss)),
            ("tpr", |r, _| r.tpr),
            ("fpr", |r, _| r.fpr),
            ("sign_consistent", |r, _| r.sign_consistent.map(f64::from)),
            ("tuning", |_, t| t),
        ];
        for (name, get) in metrics {
            let values: Vec<f64> = scored.iter().filter_map(|(r, t)| get(r, *t)).collect();
            if values.is_empty() && !matches!(name, "spectral" | "frobenius" | "max") {
                continue;
            }
            let (mean, sd) = mean_sd(&values);
            rows.push(BenchRow {
                model: cfg.model,
                p: cfg.p,
                n: cfg.n,
                alpha: cfg.alpha.to_string(),
                method: method.name().to_string(),
                metric: name.to_string(),
                mean,
                sd,
                replications: values.len(),
                failures,
            });
        }
    }
    Ok(BenchTable { rows })
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchTable> {
    let outcomes = run_replications(cfg)?;
    aggregate(cfg, &outcomes)
}
