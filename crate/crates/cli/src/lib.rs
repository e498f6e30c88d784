//! Command-line experiment runner for the `pnpmm` reconstruction library.
//!
//! Subcommands:
//!
//! * `simulate`: ground truth, forward model and seeded noisy measurements;
//! * `solve`: reconstruction from stored or freshly simulated measurements;
//! * `run`: both, in one output directory;
//! * `metrics`: image-quality metrics between two raster files;
//! * `trace-check`: monotonicity and rate checks on a written trace.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric or domain error
//! (including a failed check), 4 I/O error.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pnpmm::io::{load_mask, load_raster};
use pnpmm::metrics;
use pnpmm::solve::{monotonicity_check, rate_check, RateCheck, SolverConfig};

pub use config::{ExperimentArgs, ExperimentConfig};
pub use error::{CliError, CliResult};

use error::Stage;

#[derive(Debug, Parser)]
#[command(name = "pnpmm", version, about = "Poisson image reconstruction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate measurements from a ground-truth image.
    Simulate(ExperimentArgs),
    /// Reconstruct from measurements.
    Solve(ExperimentArgs),
    /// Simulate and reconstruct.
    Run(ExperimentArgs),
    /// Compare an estimate with a reference image.
    Metrics(MetricsArgs),
    /// Check a trace CSV for monotonicity and the convergence rate bound.
    TraceCheck(TraceCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
    /// Multiplier applied to the MAE.
    #[arg(long, default_value_t = 1.0)]
    pub mae_scale: f64,
    /// Two region masks (positive pixels inside) for the contrast-to-noise ratio.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub roi: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, Args)]
pub struct TraceCheckArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Step size; with `lambda` and `lipschitz_bound` enables the rate check.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lipschitz_bound: Option<f64>,
}

/// Runs a parsed command and returns the text for standard output.
pub fn execute(command: Command) -> CliResult<String> {
    match command {
        Command::Simulate(args) => {
            let cfg = ExperimentConfig::resolve(&args.with_file()?)?;
            pipeline::run_simulate(&cfg)?;
            Ok(format!("wrote simulation to {}\n", cfg.output.display()))
        }
        Command::Solve(args) => {
            let cfg = ExperimentConfig::resolve(&args.with_file()?)?;
            summary(&cfg, &pipeline::run_solve(&cfg)?)
        }
        Command::Run(args) => {
            let cfg = ExperimentConfig::resolve(&args.with_file()?)?;
            summary(&cfg, &pipeline::run_experiment(&cfg)?)
        }
        Command::Metrics(args) => metrics_table(&args),
        Command::TraceCheck(args) => trace_check(&args),
    }
}

fn summary(cfg: &ExperimentConfig, outcome: &pipeline::Outcome) -> CliResult<String> {
    let r = &outcome.result;
    let mut text = format!(
        "{} finished {} iterations (certified: {}, monotone: {}); outputs in {}\n",
        r.metadata.solver,
        r.metadata.iterations_run,
        r.certified,
        outcome.monotone,
        cfg.output.display()
    );
    for note in &r.metadata.notes {
        text.push_str(&format!("warning: {note}\n"));
    }
    Ok(text)
}

pub fn metrics_table(args: &MetricsArgs) -> CliResult<String> {
    let truth = load_raster(&args.truth).stage("metrics")?;
    let est = load_raster(&args.estimate).stage("metrics")?;
    let mut rows = pipeline::image_metrics("", &truth, &est, args.peak)?;
    if args.mae_scale != 1.0 {
        rows.push(("mae_scaled".into(), report::real(metrics::mae(&truth, &est, args.mae_scale).stage("metrics")?)));
    }
    if let Some(paths) = &args.roi {
        let a = load_mask(&paths[0], "a").stage("metrics")?;
        let b = load_mask(&paths[1], "b").stage("metrics")?;
        rows.push(("cnr".into(), report::real(metrics::cnr(&est, &a, &b).stage("metrics")?)));
    }
    Ok(report::key_value_csv(&rows))
}

/// Fails with exit code 3 when a check does not pass.
pub fn trace_check(args: &TraceCheckArgs) -> CliResult<String> {
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| CliError::io("trace", format!("{}: {e}", args.trace.display())))?;
    let trace = report::parse_trace_csv(&text)?;
    let monotone = monotonicity_check(&trace, args.tol);
    let mut out = format!("monotone,{monotone}\n");
    let mut ok = monotone;
    if let (Some(tau), Some(lambda), Some(l)) = (args.tau, args.lambda, args.lipschitz_bound) {
        let cfg =
            SolverConfig { tau, lambda, lipschitz_bound: l, iterations: trace.len().max(1), ..Default::default() };
        let rate = rate_check(&trace, &cfg);
        ok &= !matches!(rate, RateCheck::Violated { .. });
        out.push_str(&format!("rate_check,{}\n", report::rate_label(&rate)));
    }
    if ok {
        Ok(out)
    } else {
        Err(CliError::Check { stage: "trace-check", message: out.trim_end().replace('\n', "; ") })
    }
}
