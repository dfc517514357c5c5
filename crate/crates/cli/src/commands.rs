use std::io::Write;
use std::path::Path;

use pddcov::bench::{run_benchmark, BenchConfig};
use pddcov::clime::{clime_estimate, ClimeConfig, Epsilon};
use pddcov::crossval::{
    kfold_plan, make_plan, select_lambda_precision, select_tau, CvResult, PrecisionMethod, Target, TuningGrid,
};
use pddcov::io;
use pddcov::moments::sample_covariance;
use pddcov::pdd_rates::{block_size_f, estimate_alpha, g_bound, lambda_prime, tau_prime, AlphaMode, PddSpec, RateInput};
use pddcov::simulate::{build_model, simulate_iid, simulate_mixture, stream_rng, ModelSpec};
use pddcov::spice::{spice_estimate, SpiceConfig};
use pddcov::threshold::{threshold_correlation, threshold_covariance, ThresholdRule};
use pddcov::{Error, SymmetricMatrix, TimeSeriesPanel};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::manifest::{sha256_hex, sibling, Run};
use crate::*;

pub const SEED_ENV: &str = "PDDCOV_SEED";

type Res<T = ()> = Result<T, CliError>;

pub fn run(cli: Cli) -> Res {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage {
                subcommand: None,
                message: "--threads must be >= 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Cv(a) => cv(a),
        Command::Bench(a) => bench(a),
        Command::Rates(a) => rates(a),
        Command::AlphaFit(a) => alpha_fit(a),
    }
}

fn resolve_seed(flag: u64, subcommand: &str) -> Res<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::usage(subcommand, format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn print_json(v: &Value) -> Res {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json")).map_err(|e| CliError::Io(e.to_string()))
}

fn write_json(path: &Path, v: &Value) -> Res {
    std::fs::write(path, serde_json::to_string_pretty(v).expect("json") + "\n").map_err(|e| CliError::io(path, e))
}

fn load_panel(p: &PanelInput) -> Res<TimeSeriesPanel> {
    Ok(io::read_panel(&p.input, p.transpose)?)
}

/// Constant series have no correlation scale and make every estimator
/// degenerate.
fn require_variation(x: &TimeSeriesPanel) -> Res {
    match x.first_constant_series() {
        Some(i) => Err(Error::ZeroVariance(i).into()),
        None => Ok(()),
    }
}

/// Parses and validates a benchmark config, reporting the offending key.
pub fn load_config(path: &Path) -> Res<BenchConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg: BenchConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
        path: path.display().to_string(),
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate().map_err(|e| CliError::Schema {
        path: path.display().to_string(),
        key: ".".into(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

fn simulate(a: SimulateArgs) -> Res {
    let seed = resolve_seed(a.seed, "simulate")?;
    let mut cfg = BenchConfig::new(a.model, a.p, a.n, a.alpha);
    cfg.exp_terms = a.terms;
    cfg.seed = seed;
    let m = build_model(&ModelSpec::new(a.model, a.p))?;
    let fit = cfg.exp_fit()?;
    let mut rng = stream_rng(seed, 0);
    let x = match &fit {
        Some(f) => simulate_mixture(&m.sigma, f, a.n, &mut rng)?,
        None => simulate_iid(&m.sigma, a.n, &mut rng)?,
    };
    let config = json!({"model": a.model, "p": a.p, "n": a.n, "alpha": a.alpha, "terms": a.terms});
    let run = Run::start("simulate", config, Some(seed), &[])?;
    io::write_panel(&a.out, &x)?;
    let details = match &fit {
        Some(f) => json!({
            "fit_terms": f.terms.len(),
            "terms": f.terms,
            "max_rel_err": f.max_rel_err,
            "normalization_factor": f.normalization(),
        }),
        None => json!({"fit_terms": 0, "iid": true}),
    };
    run.finish(&a.out, &[&a.out], details)
}

fn solver_epsilon(s: &SolverArgs, subcommand: &str) -> Res<Epsilon> {
    if s.epsilon == "auto" {
        return Ok(Epsilon::Auto);
    }
    s.epsilon
        .parse()
        .map(Epsilon::Fixed)
        .map_err(|_| CliError::usage(subcommand, format!("--epsilon: expected `auto` or a number, got `{}`", s.epsilon)))
}

fn clime_config(lambda1: f64, s: &SolverArgs, subcommand: &str) -> Res<ClimeConfig> {
    let mut cfg = ClimeConfig::new(lambda1);
    cfg.epsilon = solver_epsilon(s, subcommand)?;
    cfg.xi = s.xi;
    cfg.solver_tol = s.tol.unwrap_or(cfg.solver_tol);
    cfg.max_iter = s.max_iter.unwrap_or(cfg.max_iter);
    Ok(cfg)
}

fn spice_config(lambda2: f64, s: &SolverArgs) -> SpiceConfig {
    let mut cfg = SpiceConfig::new(lambda2);
    cfg.tol = s.tol.unwrap_or(cfg.tol);
    cfg.max_iter = s.max_iter.unwrap_or(cfg.max_iter);
    cfg
}

fn required(v: Option<f64>, flag: &str, method: &str) -> Res<f64> {
    v.ok_or_else(|| CliError::usage("estimate", format!("--method {method} requires {flag}")))
}

fn estimate(a: EstimateArgs) -> Res {
    let x = load_panel(&a.panel)?;
    require_variation(&x)?;
    let s = sample_covariance(&x)?;
    let rule_name = match a.method {
        EstimateMethod::Threshold => Some(a.rule.rule.as_str()),
        EstimateMethod::Hard => Some("hard"),
        EstimateMethod::Soft => Some("soft"),
        EstimateMethod::Scad => Some("scad"),
        EstimateMethod::Alasso => Some("alasso"),
        _ => None,
    };
    let (est, config, sidecar): (SymmetricMatrix, Value, Value) = if let Some(name) = rule_name {
        let rule = ThresholdRule::parse(name, a.rule.scad_a, a.rule.alasso_eta)?;
        let tau = required(a.tau, "--tau", name)?;
        let est = match a.target {
            ThresholdTarget::Cov => threshold_covariance(&s, tau, rule)?,
            ThresholdTarget::Corr => threshold_correlation(&pddcov::moments::correlation_from_covariance(&s)?, tau, rule)?,
        };
        let target = match a.target {
            ThresholdTarget::Cov => "cov",
            ThresholdTarget::Corr => "corr",
        };
        let cfg = json!({"method": "threshold", "rule": rule, "tau": tau, "target": target});
        (est, cfg.clone(), cfg)
    } else {
        match a.method {
            EstimateMethod::Sample => (s, json!({"method": "sample"}), json!({"method": "sample"})),
            EstimateMethod::Clime => {
                let cfg = clime_config(required(a.lambda1, "--lambda1", "clime")?, &a.solver, "estimate")?;
                let fit = clime_estimate(&s, Some(x.n()), &cfg)?;
                let side = json!({
                    "lambda1": cfg.lambda1,
                    "epsilon": fit.epsilon,
                    "xi": cfg.xi,
                    "max_residual": fit.max_residual,
                    "iterations_per_column": fit.iterations_per_column,
                });
                (fit.omega, json!({"method": "clime", "config": cfg}), side)
            }
            EstimateMethod::Spice => {
                let cfg = spice_config(required(a.lambda2, "--lambda2", "spice")?, &a.solver);
                let fit = spice_estimate(&s, &cfg)?;
                let side = json!({
                    "lambda2": cfg.lambda2,
                    "iterations": fit.glasso.iterations,
                    "duality_gap": fit.glasso.duality_gap,
                    "min_eigenvalue": fit.omega.min_eigenvalue(),
                });
                (fit.omega, json!({"method": "spice", "config": cfg}), side)
            }
            _ => unreachable!("threshold methods handled above"),
        }
    };
    let mut config = config;
    config["transpose"] = json!(a.panel.transpose);
    let run = Run::start("estimate", config, None, &[&a.panel.input])?;
    io::write_symmetric(&a.out, &est)?;
    let side_path = sibling(&a.out, ".json");
    let mut sidecar = sidecar;
    sidecar["run_digest"] = json!(run.digest());
    write_json(&side_path, &sidecar)?;
    run.finish(&a.out, &[&a.out, &side_path], Value::Null)
}

fn parse_grid(s: &str) -> Res<TuningGrid> {
    if s == "auto" {
        return Ok(TuningGrid::default_grid());
    }
    let values = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage("cv", format!("--grid: `{v}` is not a number")))
        })
        .collect::<Res<Vec<f64>>>()?;
    Ok(TuningGrid::new(values)?)
}

fn curve_json(r: &CvResult) -> Value {
    // Infinite losses have no JSON number; they are written as null.
    Value::Array(
        r.curve
            .iter()
            .map(|&(v, l)| json!([v, if l.is_finite() { json!(l) } else { Value::Null }]))
            .collect(),
    )
}

fn cv(a: CvArgs) -> Res {
    let seed = resolve_seed(a.seed, "cv")?;
    let x = load_panel(&a.panel)?;
    require_variation(&x)?;
    let plan = match a.folds {
        Some(k) => kfold_plan(x.n(), k, seed)?,
        None => make_plan(x.n(), a.h1, a.h2, seed)?,
    };
    let plan_digest = sha256_hex(&serde_json::to_vec(&plan).expect("plan serializes"));
    let grid = parse_grid(&a.grid)?;
    let method_name = format!("{:?}", a.method).to_ascii_lowercase();
    let (result, method_cfg) = match (a.method, a.target) {
        (CvMethod::Clime | CvMethod::Spice, CvTarget::Prec) => {
            let method = if a.method == CvMethod::Clime {
                PrecisionMethod::Clime(clime_config(grid.values()[0].max(f64::MIN_POSITIVE), &a.solver, "cv")?)
            } else {
                PrecisionMethod::Spice(spice_config(grid.values()[0].max(f64::MIN_POSITIVE), &a.solver))
            };
            (select_lambda_precision(&x, &plan, &grid, method)?, json!(method))
        }
        (CvMethod::Clime | CvMethod::Spice, _) => {
            return Err(CliError::usage("cv", format!("--method {method_name} requires --target prec")));
        }
        (_, CvTarget::Prec) => {
            return Err(CliError::usage("cv", format!("--method {method_name} requires --target cov or corr")));
        }
        (_, t) => {
            let rule = ThresholdRule::parse(&method_name, a.scad_a, a.alasso_eta)?;
            let target = if t == CvTarget::Cov {
                Target::Covariance
            } else {
                Target::Correlation
            };
            (select_tau(&x, &plan, &grid, rule, target)?, json!(rule))
        }
    };
    let target = format!("{:?}", a.target).to_ascii_lowercase();
    let out = json!({
        "method": method_name,
        "target": target,
        "selected": result.selected,
        "cv_curve": curve_json(&result),
        "skipped": result.skipped,
        "plan_digest": plan_digest,
    });
    match &a.out {
        None => print_json(&out),
        Some(path) => {
            let config = json!({
                "method": method_cfg,
                "target": target,
                "plan": plan.scheme,
                "grid": grid.values(),
                "transpose": a.panel.transpose,
            });
            let run = Run::start("cv", config, Some(seed), &[&a.panel.input])?;
            let mut out = out;
            out["run_digest"] = json!(run.digest());
            write_json(path, &out)?;
            run.finish(path, &[path], Value::Null)
        }
    }
}

fn bench(a: BenchArgs) -> Res {
    let mut cfg = load_config(&a.config)?;
    cfg.seed = resolve_seed(cfg.seed, "bench")?;
    let table = run_benchmark(&cfg)?;
    let run = Run::start(
        "bench",
        serde_json::to_value(&cfg).expect("config serializes"),
        Some(cfg.seed),
        &[&a.config],
    )?;
    let file = std::fs::File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    io::write_bench(file, &table)?;
    run.finish(&a.out, &[&a.out], Value::Null)?;
    if a.emit_table {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn rates(a: RatesArgs) -> Res {
    let inp = RateInput::new(a.n, a.p, a.alpha).with_mp(a.mp);
    let f = block_size_f(&inp, false)?;
    let f_clime = block_size_f(&inp, true)?;
    let g = match a.alpha.finite() {
        Some(alpha) => json!(g_bound(a.n, f, &PddSpec { alpha, c0: a.c0 })?),
        None => Value::Null,
    };
    print_json(&json!({
        "n": a.n,
        "p": a.p,
        "alpha": a.alpha,
        "m_p": a.mp,
        "tau_prime": tau_prime(&inp)?,
        "lambda_prime": lambda_prime(&inp)?,
        "f": f,
        "f_clime": f_clime,
        "g": g,
    }))
}

fn alpha_fit(a: AlphaFitArgs) -> Res {
    let mode: AlphaMode = a.mode.parse().map_err(|e: Error| CliError::usage("alpha-fit", e.to_string()))?;
    let x = load_panel(&a.panel)?;
    let est = estimate_alpha(&x, a.max_lag, mode)?;
    print_json(&serde_json::to_value(&est).expect("estimate serializes"))
}
