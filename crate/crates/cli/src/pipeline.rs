//! Simulation, reconstruction and output writing for one experiment.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use pnpmm::io::{load_kernel, load_raster, save_raster, RasterFormat};
use pnpmm::metrics;
use pnpmm::objective::{LinearSmoother, NoRegularizer, PoissonNll, Regularizer, SmoothedTv};
use pnpmm::operators::{
    Convolution, Identity, Kernel, LinearOperator, Projector, ProjectorGeometry, Scaled, SharedOperator,
};
use pnpmm::phantom;
use pnpmm::simulate::{sample_poisson, sample_poisson_gaussian, CountScale, NoiseSpec};
use pnpmm::solve::{
    final_denoise, mfb_run_with, mlem_run_with, monotonicity_check, osem_run_with, pnp_mm_run_with, rate_check,
    EmAnchor, RunOptions, SolveResult, SolverConfig,
};
use pnpmm::{Measurement, Raster, Shape};

use crate::config::{AnchorKind, ExperimentConfig, PhantomKind, ProblemKind, RegularizerKind, SolverKind};
use crate::error::{CliError, CliResult, Stage};
use crate::report;

/// Ground truth, forward operator and noisy data of one experiment.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub truth: Raster,
    /// Unscaled forward operator `A`.
    pub operator: SharedOperator,
    /// Raw counts when there is no Gaussian noise, `k/ζ + ε` otherwise.
    pub data: Measurement,
    /// Absolute Gaussian standard deviation used.
    pub gauss_sigma: f64,
}

pub fn load_truth(cfg: &ExperimentConfig) -> CliResult<Raster> {
    match &cfg.ground_truth {
        Some(path) => load_raster(path).stage("load"),
        None => {
            let shape = Shape::new(cfg.size, cfg.size);
            Ok(match cfg.phantom {
                PhantomKind::Blocks => phantom::blocks_and_discs(shape),
                PhantomKind::SheppLogan => phantom::shepp_logan(shape),
                PhantomKind::Validation => phantom::validation_phantom(shape),
            })
        }
    }
}

pub fn build_operator(cfg: &ExperimentConfig, shape: Shape) -> CliResult<SharedOperator> {
    let op: SharedOperator = match cfg.problem {
        ProblemKind::Identity => Arc::new(Identity::new(shape)),
        ProblemKind::Deblur => {
            let kernel = match &cfg.kernel {
                Some(path) => load_kernel(path).stage("operator")?,
                None => Kernel::gaussian(cfg.kernel_size, cfg.kernel_std).stage("operator")?,
            };
            Arc::new(Convolution::new(kernel, shape).stage("operator")?)
        }
        ProblemKind::Tomo => {
            let geometry = match cfg.detector_bins {
                Some(bins) => ProjectorGeometry::uniform(cfg.angles, bins, cfg.detector_spacing),
                None => ProjectorGeometry::for_image(shape, cfg.angles),
            }
            .stage("operator")?;
            Arc::new(Projector::new(geometry, shape).stage("operator")?)
        }
    };
    if cfg.normalize_operator {
        return Ok(Arc::new(Scaled::normalized(op).stage("operator")?));
    }
    Ok(op)
}

/// Measurement layout on disk: image-shaped for deblurring, one row per
/// angle for tomography.
fn measurement_shape(cfg: &ExperimentConfig, op: &dyn LinearOperator) -> Shape {
    let n = op.output_len();
    match cfg.problem {
        ProblemKind::Tomo => Shape::new(n / cfg.angles, cfg.angles),
        _ => op.input_shape(),
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Simulated> {
    let truth = load_truth(cfg)?;
    let op = build_operator(cfg, truth.shape())?;
    let mean = op.apply(&truth).stage("simulate")?;
    let gauss_sigma = match cfg.gauss_sigma_relative {
        Some(frac) => frac * mean.sum() / mean.len() as f64,
        None => cfg.gauss_sigma,
    };
    let spec = NoiseSpec::new(cfg.zeta, gauss_sigma, cfg.seed).stage("simulate")?;
    let data = if gauss_sigma > 0.0 {
        sample_poisson_gaussian(&mean, &spec)
    } else {
        sample_poisson(&mean, &spec, CountScale::Counts)
    }
    .stage("simulate")?;
    Ok(Simulated { truth, operator: op, data, gauss_sigma })
}

/// Poisson data are solved as `(ζA, k)`; Poisson–Gaussian data as
/// `(A, max(z + σ², 0))` with background `σ²`.
pub fn build_nll(
    cfg: &ExperimentConfig,
    op: SharedOperator,
    data: Measurement,
    gauss_sigma: f64,
) -> CliResult<PoissonNll> {
    if gauss_sigma > 0.0 {
        let y = pnpmm::simulate::shifted_poisson_preprocess(&data, gauss_sigma);
        PoissonNll::new(y, op, gauss_sigma * gauss_sigma).stage("objective")
    } else {
        let scaled: SharedOperator = Arc::new(Scaled::new(op, cfg.zeta).stage("objective")?);
        PoissonNll::new(data, scaled, 0.0).stage("objective")
    }
}

pub fn build_regularizer(cfg: &ExperimentConfig, shape: Shape) -> CliResult<Box<dyn Regularizer>> {
    Ok(match cfg.regularizer {
        RegularizerKind::None => Box::new(NoRegularizer),
        RegularizerKind::LinearSmoother => {
            Box::new(LinearSmoother::gaussian(cfg.sigma_denoiser, shape).stage("regularizer")?)
        }
        RegularizerKind::SmoothedTv => Box::new(
            SmoothedTv::with_sigma(cfg.tv_epsilon.unwrap_or(cfg.sigma_denoiser), cfg.sigma_denoiser)
                .stage("regularizer")?,
        ),
    })
}

pub fn solver_config(cfg: &ExperimentConfig, reg: &dyn Regularizer) -> SolverConfig {
    let l = cfg.lipschitz_bound.unwrap_or(match cfg.regularizer {
        RegularizerKind::None => 1.0,
        _ => reg.lipschitz_bound(),
    });
    let lambda = match (cfg.solver, cfg.lambda) {
        (SolverKind::Mlem | SolverKind::Osem, _) => 0.0,
        (_, Some(l)) => l,
        (_, None) => 0.5 / (cfg.tau * l),
    };
    SolverConfig {
        tau: cfg.tau,
        lambda,
        sigma_denoiser: cfg.sigma_denoiser,
        iterations: cfg.iterations,
        subsets: cfg.subsets,
        lipschitz_bound: l,
        seed: cfg.seed,
        data_tau: cfg.data_tau,
        early_stop: cfg.early_stop,
        em_anchor: match cfg.em_anchor {
            AnchorKind::Current => EmAnchor::Current,
            AnchorKind::HalfStep => EmAnchor::HalfStep,
        },
    }
}

/// Runs the configured solver.
pub fn reconstruct(
    cfg: &ExperimentConfig,
    nll: &PoissonNll,
    reg: &dyn Regularizer,
    truth: Option<&Raster>,
) -> CliResult<SolveResult> {
    let sc = solver_config(cfg, reg);
    let opts = RunOptions { truth, peak: cfg.peak, ..Default::default() };
    let mut result = match cfg.solver {
        SolverKind::Mlem => mlem_run_with(nll, &sc, opts),
        SolverKind::Osem => osem_run_with(nll, &sc, opts),
        SolverKind::Mfb => mfb_run_with(nll, reg, &sc, opts),
        SolverKind::PnpMm => pnp_mm_run_with(nll, reg, &sc, opts),
    }
    .stage("solve")?;
    if cfg.normalize_operator {
        result.metadata.notes.push("operator normalized to unit peak sensitivity".into());
    }
    Ok(result)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io("output", format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io("output", format!("{}: {e}", dir.display())))
}

fn save_both(dir: &Path, stem: &str, raster: &Raster, peak: f64) -> CliResult<()> {
    for format in [RasterFormat::Pgm, RasterFormat::Fras] {
        save_raster(dir.join(format!("{stem}.{}", format.extension())), raster, format, peak).stage("output")?;
    }
    Ok(())
}

/// `simulate`: writes the ground truth, the measurements and the config echo.
pub fn run_simulate(cfg: &ExperimentConfig) -> CliResult<Simulated> {
    let sim = simulate(cfg)?;
    ensure_dir(&cfg.output)?;
    save_both(&cfg.output, "truth", &sim.truth, cfg.peak)?;
    let shape = measurement_shape(cfg, sim.operator.as_ref());
    let data = Raster::new(shape.width, shape.height, sim.data.bins().to_vec()).stage("output")?;
    save_raster(cfg.output.join("measurements.fras"), &data, RasterFormat::Fras, cfg.peak).stage("output")?;
    let mut echo = cfg.clone();
    echo.gauss_sigma = sim.gauss_sigma;
    echo.gauss_sigma_relative = None;
    write(&cfg.output.join("config.toml"), echo.to_toml())?;
    Ok(sim)
}

/// Summary of a finished reconstruction.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: SolveResult,
    pub denoised: Option<Raster>,
    pub monotone: bool,
}

/// `solve`: reconstructs from stored measurements, or from a fresh
/// simulation when none are given, and writes every output.
pub fn run_solve(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    match &cfg.measurements {
        Some(path) => {
            if cfg.gauss_sigma_relative.is_some() {
                return Err(CliError::config("solve", "stored measurements need an absolute gauss_sigma"));
            }
            let truth = match &cfg.ground_truth {
                Some(p) => Some(load_raster(p).stage("load")?),
                None => None,
            };
            let shape = match &truth {
                Some(t) => t.shape(),
                None => Shape::new(cfg.size, cfg.size),
            };
            let op = build_operator(cfg, shape)?;
            let stored = load_raster(path).stage("load")?;
            let data = Measurement::new(stored.into_values()).stage("load")?;
            data.ensure_len(op.output_len(), "measurements").stage("load")?;
            solve_and_write(cfg, truth, op, data, cfg.gauss_sigma)
        }
        None => {
            let sim = simulate(cfg)?;
            solve_and_write(cfg, Some(sim.truth), sim.operator, sim.data, sim.gauss_sigma)
        }
    }
}

/// `run`: the full pipeline, simulation outputs included.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sim = run_simulate(cfg)?;
    solve_and_write(cfg, Some(sim.truth), sim.operator, sim.data, sim.gauss_sigma)
}

fn solve_and_write(
    cfg: &ExperimentConfig,
    truth: Option<Raster>,
    op: SharedOperator,
    data: Measurement,
    gauss_sigma: f64,
) -> CliResult<Outcome> {
    let shape = op.input_shape();
    let nll = build_nll(cfg, op, data, gauss_sigma)?;
    let reg = build_regularizer(cfg, shape)?;
    let mut result = reconstruct(cfg, &nll, reg.as_ref(), truth.as_ref())?;
    let denoised = match cfg.final_denoise_tau {
        Some(tau) => Some(final_denoise(&mut result, reg.as_ref(), tau).stage("solve")?),
        None => None,
    };
    let monotone = monotonicity_check(&result.trace, 1e-10);
    let rate = rate_check(&result.trace, &solver_config(cfg, reg.as_ref()));

    ensure_dir(&cfg.output)?;
    save_both(&cfg.output, "reconstruction", &result.reconstruction, cfg.peak)?;
    if nll.background() > 0.0 {
        save_raster(cfg.output.join("last_iterate.fras"), &result.last_iterate, RasterFormat::Fras, cfg.peak)
            .stage("output")?;
    }
    if let Some(d) = &denoised {
        save_both(&cfg.output, "reconstruction_denoised", d, cfg.peak)?;
    }
    write(&cfg.output.join("trace.csv"), report::trace_csv(&result.trace))?;
    let mut rows = vec![
        ("solver".to_string(), result.metadata.solver.to_string()),
        ("iterations".to_string(), result.metadata.iterations_run.to_string()),
        ("certified".to_string(), result.certified.to_string()),
        ("monotone".to_string(), monotone.to_string()),
        ("rate_check".to_string(), report::rate_label(&rate).to_string()),
    ];
    let last = result.trace.records.last().copied().unwrap_or(result.trace.initial);
    rows.push(("f".into(), report::real(last.f)));
    rows.push(("h".into(), report::real(last.h)));
    if let Some(t) = &truth {
        rows.extend(image_metrics("", t, &result.reconstruction, cfg.peak)?);
        if let Some(d) = &denoised {
            rows.extend(image_metrics("denoised_", t, d, cfg.peak)?);
        }
    }
    for note in result.metadata.notes.iter().chain(&result.metadata.post_processing) {
        rows.push(("note".into(), note.replace(',', ";")));
    }
    write(&cfg.output.join("metrics.csv"), report::key_value_csv(&rows))?;
    let mut echo = cfg.clone();
    echo.lambda = Some(result.metadata.config.lambda);
    echo.lipschitz_bound = Some(result.metadata.config.lipschitz_bound);
    echo.gauss_sigma = gauss_sigma;
    echo.gauss_sigma_relative = None;
    write(&cfg.output.join("config.toml"), echo.to_toml())?;
    Ok(Outcome { result, denoised, monotone })
}

/// PSNR, SSIM (when the image is large enough), MAE and NRMSE rows.
pub fn image_metrics(prefix: &str, truth: &Raster, est: &Raster, peak: f64) -> CliResult<Vec<(String, String)>> {
    let mut rows = vec![(format!("{prefix}psnr"), report::real(metrics::psnr(truth, est, peak).stage("metrics")?))];
    if truth.width() >= 11 && truth.height() >= 11 {
        rows.push((format!("{prefix}ssim"), report::real(metrics::ssim(truth, est, peak).stage("metrics")?)));
    }
    rows.push((format!("{prefix}mae"), report::real(metrics::mae(truth, est, 1.0).stage("metrics")?)));
    match metrics::nrmse(truth, est) {
        Ok(v) => rows.push((format!("{prefix}nrmse"), report::real(v))),
        Err(pnpmm::Error::UndefinedMetric(_)) => {}
        Err(e) => return Err(e).stage("metrics"),
    }
    Ok(rows)
}
