//! `pddcov` command-line interface.

mod commands;
mod error;
mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use pddcov::pdd_rates::Alpha;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pddcov", version, about = "Covariance, correlation and precision estimation for dependent time series")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a model panel from the long-memory AR(1) mixture.
    Simulate(SimulateArgs),
    /// Estimate a covariance, correlation or precision matrix from a panel.
    Estimate(EstimateArgs),
    /// Cross-validate a tuning parameter.
    Cv(CvArgs),
    /// Run a benchmark from a JSON config.
    Bench(BenchArgs),
    /// Print the theoretical rates and block sizes.
    Rates(RatesArgs),
    /// Fit a power-law decay to the sample autocorrelations.
    AlphaFit(AlphaFitArgs),
}

fn parse_alpha(s: &str) -> Result<Alpha, String> {
    s.parse().map_err(|e: pddcov::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct PanelInput {
    /// Panel CSV, one row per series.
    #[arg(long)]
    pub input: PathBuf,
    /// Read the panel as one row per time point.
    #[arg(long)]
    pub transpose: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: u8,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    /// Decay exponent, or `inf`/`iid` for independent columns.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Alpha,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exponential terms in the mixture (automatic by default).
    #[arg(long)]
    pub terms: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateMethod {
    Sample,
    Threshold,
    Hard,
    Soft,
    Scad,
    Alasso,
    Clime,
    Spice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdTarget {
    Cov,
    Corr,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    /// Rule for `--method threshold`.
    #[arg(long, default_value = "hard")]
    pub rule: String,
    #[arg(long, default_value_t = pddcov::threshold::DEFAULT_SCAD_A)]
    pub scad_a: f64,
    #[arg(long, default_value_t = pddcov::threshold::DEFAULT_ALASSO_ETA)]
    pub alasso_eta: f64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// `auto` for n^{-1/2}, or a value >= 0.
    #[arg(long, default_value = "auto")]
    pub epsilon: String,
    /// Hard threshold applied to the CLIME estimate.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Solver tolerance (CLIME feasibility or SPICE duality gap).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub panel: PanelInput,
    #[arg(long, value_enum)]
    pub method: EstimateMethod,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Scale for thresholding.
    #[arg(long, value_enum, default_value = "corr")]
    pub target: ThresholdTarget,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Estimate CSV; a JSON sidecar and a manifest are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvMethod {
    Hard,
    Soft,
    Scad,
    Alasso,
    Clime,
    Spice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvTarget {
    Cov,
    Corr,
    Prec,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub panel: PanelInput,
    #[arg(long, value_enum)]
    pub method: CvMethod,
    #[arg(long, value_enum)]
    pub target: CvTarget,
    #[arg(long, default_value_t = pddcov::crossval::DEFAULT_H1)]
    pub h1: usize,
    #[arg(long, default_value_t = pddcov::crossval::DEFAULT_H2)]
    pub h2: usize,
    /// Use shuffled k-fold splits instead of gap blocks.
    #[arg(long)]
    pub folds: Option<usize>,
    /// `auto` or a comma-separated increasing list.
    #[arg(long, default_value = "auto")]
    pub grid: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = pddcov::threshold::DEFAULT_SCAD_A)]
    pub scad_a: f64,
    #[arg(long, default_value_t = pddcov::threshold::DEFAULT_ALASSO_ETA)]
    pub alasso_eta: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the JSON here (with a manifest) instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Results CSV; a manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Also print a text table to stdout.
    #[arg(long)]
    pub emit_table: bool,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Alpha,
    /// Bound on the matrix ℓ1 norm of the precision matrix.
    #[arg(long, default_value_t = 1.0)]
    pub mp: f64,
    /// Decay constant used for the dependence budget.
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
}

#[derive(Debug, Args)]
pub struct AlphaFitArgs {
    #[command(flatten)]
    pub panel: PanelInput,
    #[arg(long)]
    pub max_lag: usize,
    /// `envelope` or `per_series`.
    #[arg(long, default_value = "envelope")]
    pub mode: String,
}

fn subcommand_name(argv: &[OsString]) -> Option<String> {
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    argv.iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| names.iter().any(|n| n == a))
        .map(str::to_string)
}

fn print_help(subcommand: Option<&str>) {
    let mut cmd = Cli::command();
    let help = match subcommand.and_then(|s| cmd.find_subcommand_mut(s)) {
        Some(sub) => sub.render_help(),
        None => cmd.render_help(),
    };
    let _ = writeln!(std::io::stderr(), "\n{help}");
}

/// Runs the CLI on `argv` and returns the process exit code.
pub fn dispatch(argv: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 1,
                _ => {
                    print_help(subcommand_name(&argv).as_deref());
                    1
                }
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", e.diagnostic());
            if let CliError::Usage { subcommand, .. } = &e {
                print_help(subcommand.as_deref());
            }
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(dispatch(std::env::args_os().collect()));
}
