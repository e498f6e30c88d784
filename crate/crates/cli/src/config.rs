//! Experiment configuration: command-line flags, an optional TOML file with
//! the same keys, and the resolved form with defaults filled in.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Deblur,
    Tomo,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Mlem,
    Osem,
    Mfb,
    PnpMm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    LinearSmoother,
    SmoothedTv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Blocks,
    SheppLogan,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    Current,
    HalfStep,
}

/// Every experiment setting, all optional. Flags and file keys share names.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentArgs {
    /// TOML file supplying any of these settings; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    /// Kernel text file; a Gaussian kernel is used when absent.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub kernel_std: Option<f64>,
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long)]
    pub detector_bins: Option<usize>,
    #[arg(long)]
    pub detector_spacing: Option<f64>,
    /// Divide the operator by its largest sensitivity so that `max Aᵀ1 = 1`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize_operator: Option<bool>,

    /// Gain ζ: counts are Poisson(ζ·Ax).
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Absolute standard deviation of the additive Gaussian noise.
    #[arg(long)]
    pub gauss_sigma: Option<f64>,
    /// Gaussian standard deviation as a fraction of the mean noiseless signal.
    #[arg(long)]
    pub gauss_sigma_relative: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sigma_denoiser: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub subsets: Option<usize>,
    #[arg(long)]
    pub lipschitz_bound: Option<f64>,
    #[arg(long)]
    pub data_tau: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub early_stop: Option<bool>,
    #[arg(long, value_enum)]
    pub em_anchor: Option<AnchorKind>,

    #[arg(long, value_enum)]
    pub regularizer: Option<RegularizerKind>,
    /// Smoothing of the total-variation regularizer; defaults to the denoiser sigma.
    #[arg(long)]
    pub tv_epsilon: Option<f64>,
    /// Step of an extra gradient-step denoising of the output.
    #[arg(long)]
    pub final_denoise_tau: Option<f64>,

    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub phantom: Option<PhantomKind>,
    /// Side length of generated phantoms.
    #[arg(long)]
    pub size: Option<usize>,
    /// Measurement file for `solve`.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Dynamic range for PSNR, SSIM and PGM output.
    #[arg(long)]
    pub peak: Option<f64>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($field:ident),* $(,)?) => {
        ExperimentArgs { config: $top.config.clone().or($base.config.clone()), $($field: $top.$field.clone().or($base.$field.clone())),* }
    };
}

impl ExperimentArgs {
    /// `self` where set, `base` otherwise.
    pub fn over(&self, base: &ExperimentArgs) -> ExperimentArgs {
        overlay!(self, base;
            problem, kernel, kernel_size, kernel_std, angles, detector_bins, detector_spacing, normalize_operator,
            zeta, gauss_sigma, gauss_sigma_relative, seed,
            solver, tau, lambda, sigma_denoiser, iterations, subsets, lipschitz_bound, data_tau, early_stop, em_anchor,
            regularizer, tv_epsilon, final_denoise_tau,
            ground_truth, phantom, size, measurements, output, peak,
        )
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config("config", e.to_string()))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Merges the referenced config file, if any, under the flags.
    pub fn with_file(self) -> CliResult<Self> {
        match &self.config {
            Some(path) => Ok(self.over(&Self::from_file(path)?)),
            None => Ok(self),
        }
    }
}

/// Resolved settings; serialized as the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub kernel: Option<PathBuf>,
    pub kernel_size: usize,
    pub kernel_std: f64,
    pub angles: usize,
    pub detector_bins: Option<usize>,
    pub detector_spacing: f64,
    pub normalize_operator: bool,
    pub zeta: f64,
    pub gauss_sigma: f64,
    pub gauss_sigma_relative: Option<f64>,
    pub seed: u64,
    pub solver: SolverKind,
    pub tau: f64,
    /// `None` selects half the largest certified weight, `0.5/(τ·L)`.
    pub lambda: Option<f64>,
    pub sigma_denoiser: f64,
    pub iterations: usize,
    pub subsets: usize,
    pub lipschitz_bound: Option<f64>,
    pub data_tau: Option<f64>,
    pub early_stop: bool,
    pub em_anchor: AnchorKind,
    pub regularizer: RegularizerKind,
    pub tv_epsilon: Option<f64>,
    pub final_denoise_tau: Option<f64>,
    pub ground_truth: Option<PathBuf>,
    pub phantom: PhantomKind,
    pub size: usize,
    pub measurements: Option<PathBuf>,
    pub output: PathBuf,
    pub peak: f64,
}

impl ExperimentConfig {
    pub fn resolve(args: &ExperimentArgs) -> CliResult<Self> {
        let solver = args.solver.unwrap_or(SolverKind::PnpMm);
        let regularizer = args.regularizer.unwrap_or(match solver {
            SolverKind::Mlem | SolverKind::Osem => RegularizerKind::None,
            SolverKind::Mfb | SolverKind::PnpMm => RegularizerKind::SmoothedTv,
        });
        let cfg = ExperimentConfig {
            problem: args.problem.unwrap_or(ProblemKind::Deblur),
            kernel: args.kernel.clone(),
            kernel_size: args.kernel_size.unwrap_or(9),
            kernel_std: args.kernel_std.unwrap_or(1.6),
            angles: args.angles.unwrap_or(12),
            detector_bins: args.detector_bins,
            detector_spacing: args.detector_spacing.unwrap_or(1.0),
            normalize_operator: args.normalize_operator.unwrap_or(false),
            zeta: args.zeta.unwrap_or(5.0),
            gauss_sigma: args.gauss_sigma.unwrap_or(0.0),
            gauss_sigma_relative: args.gauss_sigma_relative,
            seed: args.seed.unwrap_or(0),
            solver,
            tau: args.tau.unwrap_or(1.0),
            lambda: args.lambda,
            sigma_denoiser: args.sigma_denoiser.unwrap_or(0.05),
            iterations: args.iterations.unwrap_or(100),
            subsets: args.subsets.unwrap_or(if solver == SolverKind::Osem { 4 } else { 1 }),
            lipschitz_bound: args.lipschitz_bound,
            data_tau: args.data_tau,
            early_stop: args.early_stop.unwrap_or(false),
            em_anchor: args.em_anchor.unwrap_or(AnchorKind::Current),
            regularizer,
            tv_epsilon: args.tv_epsilon,
            final_denoise_tau: args.final_denoise_tau,
            ground_truth: args.ground_truth.clone(),
            phantom: args.phantom.unwrap_or(PhantomKind::Blocks),
            size: args.size.unwrap_or(64),
            measurements: args.measurements.clone(),
            output: args.output.clone().unwrap_or_else(|| PathBuf::from("out")),
            peak: args.peak.unwrap_or(1.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::config("config", m));
        if matches!(self.solver, SolverKind::Mlem | SolverKind::Osem) && self.regularizer != RegularizerKind::None {
            return fail(format!("{:?} takes no regularizer", self.solver).to_lowercase());
        }
        if matches!(self.solver, SolverKind::Mfb | SolverKind::PnpMm)
            && self.regularizer == RegularizerKind::None
            && self.lambda.is_none_or(|l| l != 0.0)
        {
            return fail("regularized solvers need a regularizer unless lambda = 0".into());
        }
        if self.gauss_sigma != 0.0 && self.gauss_sigma_relative.is_some() {
            return fail("gauss_sigma and gauss_sigma_relative are exclusive".into());
        }
        if self.size == 0 || self.kernel_size == 0 || self.angles == 0 {
            return fail("size, kernel_size and angles must be positive".into());
        }
        if !(self.peak > 0.0) {
            return fail(format!("peak must be positive, got {}", self.peak));
        }
        for (name, path) in
            [("kernel", &self.kernel), ("ground_truth", &self.ground_truth), ("measurements", &self.measurements)]
        {
            if let Some(p) = path {
                if !p.exists() {
                    return fail(format!("{name} file {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
