//! Iterative reconstruction: MLEM, OSEM, majorized forward-backward (MFB) and
//! plug-and-play majorization-minimization (PnP-MM), plus the runtime checks
//! of their convergence guarantees.
//!
//! Every solver starts from the all-ones image unless told otherwise, runs a
//! fixed number of iterations and records one [`TraceRecord`] per iteration.
//! A run is *certified* when the regularizer is a true gradient-step potential,
//! a single step size is used and `τ·λ·L < 1`; certified traces are expected to
//! pass [`monotonicity_check`] and [`rate_check`].

use crate::error::{Error, Result};
use crate::majorize::SurrogateContext;
use crate::metrics;
use crate::objective::{gs_denoise, PoissonNll, Regularizer};
use crate::operators::{sensitivity, split_subsets};
use crate::raster::Raster;

/// Which iterate anchors the EM majorant in the PnP-MM data step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmAnchor {
    /// Majorize at `x⁽ⁿ⁾`; the PnP-MM step is then exactly the MFB step.
    #[default]
    Current,
    /// Majorize at the half step `x⁽ⁿ⁺½⁾`. Not covered by the descent argument,
    /// so runs are never certified.
    HalfStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step size `τ`.
    pub tau: f64,
    /// Regularization weight `λ`.
    pub lambda: f64,
    /// Noise level handed to the denoiser.
    pub sigma_denoiser: f64,
    pub iterations: usize,
    pub subsets: usize,
    /// Lipschitz bound `L` of `∇g` used by [`rate_check`].
    pub lipschitz_bound: f64,
    pub seed: u64,
    /// Separate step for the data term; disables certification.
    pub data_tau: Option<f64>,
    /// Stop once `‖x⁽ⁿ⁺¹⁾ − x⁽ⁿ⁾‖² < 1e−14·‖x⁽ⁿ⁺¹⁾‖²`.
    pub early_stop: bool,
    pub em_anchor: EmAnchor,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 1.0,
            lambda: 0.0,
            sigma_denoiser: 0.0,
            iterations: 100,
            subsets: 1,
            lipschitz_bound: 1.0,
            seed: 0,
            data_tau: None,
            early_stop: false,
            em_anchor: EmAnchor::Current,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.iterations == 0 || self.subsets == 0 {
            return Err(Error::Config("iterations and subsets must be positive".into()));
        }
        if !(self.lipschitz_bound > 0.0) {
            return Err(Error::Config(format!("lipschitz bound must be positive, got {}", self.lipschitz_bound)));
        }
        if let Some(t) = self.data_tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("data tau must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn data_step(&self) -> f64 {
        self.data_tau.unwrap_or(self.tau)
    }
}

/// Objective values after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub f: f64,
    pub g: f64,
    pub h: f64,
    /// `‖x⁽ⁿ⁺¹⁾ − x⁽ⁿ⁾‖²`; zero for the initial point.
    pub residual_sq: f64,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// Values at the starting point `x⁽⁰⁾`.
    pub initial: TraceRecord,
    /// One record per completed iteration.
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `h` at `x⁽⁰⁾, x⁽¹⁾, …`.
    pub fn h_values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.initial.h).chain(self.records.iter().map(|r| r.h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub solver: &'static str,
    pub config: SolverConfig,
    /// Lipschitz bound reported by the regularizer, when there is one.
    pub regularizer_lipschitz: Option<f64>,
    pub background: f64,
    pub iterations_run: usize,
    /// Why a run is uncertified, and other warnings.
    pub notes: Vec<String>,
    /// Steps applied after the iterations, outside the trace.
    pub post_processing: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Reported image: the last iterate, after the background correction for
    /// shifted-Poisson PnP-MM runs.
    pub reconstruction: Raster,
    /// Last iterate before any correction.
    pub last_iterate: Raster,
    pub trace: ConvergenceTrace,
    pub certified: bool,
    pub metadata: RunMetadata,
}

/// Per-iteration callback receiving `(iteration, iterate)`.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &Raster);

/// Optional inputs shared by all solvers.
pub struct RunOptions<'a> {
    /// Ground truth for per-iteration PSNR.
    pub truth: Option<&'a Raster>,
    pub peak: f64,
    /// Starting image; all ones when absent.
    pub initial: Option<Raster>,
    /// Called with `(iteration, iterate)` after every update.
    pub observer: Option<Observer<'a>>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions { truth: None, peak: 1.0, initial: None, observer: None }
    }
}

struct Recorder<'a> {
    truth: Option<&'a Raster>,
    peak: f64,
    observer: Option<Observer<'a>>,
}

impl<'a> Recorder<'a> {
    fn new(opts: RunOptions<'a>, nll: &PoissonNll) -> Result<(Self, Raster)> {
        let shape = nll.input_shape();
        let x0 = match opts.initial {
            Some(x) => {
                x.ensure_shape(shape, "initial image")?;
                x.ensure_nonnegative("initial image")?;
                x
            }
            None => Raster::ones(shape),
        };
        if let Some(t) = opts.truth {
            t.ensure_shape(shape, "ground truth")?;
        }
        Ok((Recorder { truth: opts.truth, peak: opts.peak, observer: opts.observer }, x0))
    }

    fn record(&self, f: f64, g: f64, lambda: f64, residual_sq: f64, reported: &Raster) -> Result<TraceRecord> {
        let h = if lambda == 0.0 { f } else { f + lambda * g };
        let psnr = match self.truth {
            Some(t) => Some(metrics::psnr(t, reported, self.peak)?),
            None => None,
        };
        Ok(TraceRecord { f, g, h, residual_sq, psnr })
    }

    fn observe(&mut self, n: usize, x: &Raster) {
        if let Some(obs) = self.observer.as_mut() {
            obs(n, x);
        }
    }
}

fn should_stop(config: &SolverConfig, residual_sq: f64, x: &Raster) -> bool {
    config.early_stop && residual_sq < 1e-14 * x.norm_sq()
}

fn metadata(
    solver: &'static str,
    config: &SolverConfig,
    nll: &PoissonNll,
    reg: Option<&dyn Regularizer>,
) -> RunMetadata {
    RunMetadata {
        solver,
        config: config.clone(),
        regularizer_lipschitz: reg.map(|r| r.lipschitz_bound()),
        background: nll.background(),
        iterations_run: 0,
        notes: Vec::new(),
        post_processing: Vec::new(),
    }
}

/// Checks the step-size hypotheses of the descent guarantee, recording every
/// violation in `notes`.
fn certify(config: &SolverConfig, reg: &dyn Regularizer, notes: &mut Vec<String>) -> bool {
    let mut ok = true;
    if !reg.is_gradient_step() {
        notes.push("regularizer is not a gradient-step potential".into());
        ok = false;
    }
    if config.data_tau.is_some() {
        notes.push("separate data-term step size".into());
        ok = false;
    }
    let product = config.tau * config.lambda * reg.lipschitz_bound();
    if config.lambda > 0.0 && !(product < 1.0) {
        notes.push(format!("tau*lambda*L = {product:.6} is not below 1"));
        ok = false;
    }
    ok
}

/// Maximum-likelihood EM: `x ← (x/s)·Aᵀ(y/(Ax + b))`.
pub fn mlem_run(nll: &PoissonNll, config: &SolverConfig) -> Result<SolveResult> {
    mlem_run_with(nll, config, RunOptions::default())
}

pub fn mlem_run_with(nll: &PoissonNll, config: &SolverConfig, opts: RunOptions<'_>) -> Result<SolveResult> {
    config.validate()?;
    let (mut rec, mut x) = Recorder::new(opts, nll)?;
    let s = sensitivity(nll.operator().as_ref())?;
    let mut ctx = SurrogateContext::build_with_sensitivity(nll, &x, s.clone())?;
    let initial = rec.record(ctx.anchor_value(nll), 0.0, 0.0, 0.0, &x)?;
    let mut records = Vec::with_capacity(config.iterations);
    for n in 0..config.iterations {
        let next = ctx.argmin()?;
        let residual_sq = next.dist_sq(&x)?;
        ctx = SurrogateContext::build_with_sensitivity(nll, &next, s.clone())?;
        x = next;
        rec.observe(n, &x);
        records.push(rec.record(ctx.anchor_value(nll), 0.0, 0.0, residual_sq, &x)?);
        if should_stop(config, residual_sq, &x) {
            break;
        }
    }
    let mut metadata = metadata("mlem", config, nll, None);
    metadata.iterations_run = records.len();
    Ok(SolveResult {
        reconstruction: x.clone(),
        last_iterate: x,
        trace: ConvergenceTrace { initial, records },
        certified: true,
        metadata,
    })
}

/// Ordered-subsets EM: one MLEM sub-step per subset, subsets visited in
/// ascending order, one trace record per full cycle.
pub fn osem_run(nll: &PoissonNll, config: &SolverConfig) -> Result<SolveResult> {
    osem_run_with(nll, config, RunOptions::default())
}

pub fn osem_run_with(nll: &PoissonNll, config: &SolverConfig, opts: RunOptions<'_>) -> Result<SolveResult> {
    config.validate()?;
    let (mut rec, mut x) = Recorder::new(opts, nll)?;
    // The union of the subsets must still see every pixel.
    sensitivity(nll.operator().as_ref())?;
    let subsets = split_subsets(nll.operator(), config.subsets)?;
    let parts: Vec<(PoissonNll, &Raster)> = subsets
        .iter()
        .map(|sub| {
            let y = nll.data().gather(&sub.output_indices);
            Ok((PoissonNll::new(y, sub.op.clone(), nll.background())?, &sub.sensitivity))
        })
        .collect::<Result<_>>()?;

    let initial = rec.record(nll.eval(&x)?, 0.0, 0.0, 0.0, &x)?;
    let mut records = Vec::with_capacity(config.iterations);
    for n in 0..config.iterations {
        let start = x.clone();
        for (sub_nll, sub_s) in &parts {
            let ctx = SurrogateContext::build_with_sensitivity(sub_nll, &x, (*sub_s).clone())?;
            // Pixels a subset does not see keep their value.
            let update = ctx.em_numerator().zip_map(sub_s, |t, s| if s > 0.0 { t / s } else { f64::NAN })?;
            x = update.zip_map(&x, |u, old| if u.is_nan() { old } else { u })?;
        }
        let residual_sq = x.dist_sq(&start)?;
        rec.observe(n, &x);
        records.push(rec.record(nll.eval(&x)?, 0.0, 0.0, residual_sq, &x)?);
        if should_stop(config, residual_sq, &x) {
            break;
        }
    }
    let mut metadata = metadata("osem", config, nll, None);
    metadata.iterations_run = records.len();
    Ok(SolveResult {
        reconstruction: x.clone(),
        last_iterate: x,
        trace: ConvergenceTrace { initial, records },
        certified: config.subsets == 1,
        metadata,
    })
}

/// Majorized forward-backward:
/// `x ← prox_{τF(·, x)}(x − τλ∇g(x))` with `F` the EM majorant at `x`.
pub fn mfb_run(nll: &PoissonNll, reg: &dyn Regularizer, config: &SolverConfig) -> Result<SolveResult> {
    mfb_run_with(nll, reg, config, RunOptions::default())
}

pub fn mfb_run_with(
    nll: &PoissonNll,
    reg: &dyn Regularizer,
    config: &SolverConfig,
    opts: RunOptions<'_>,
) -> Result<SolveResult> {
    config.validate()?;
    let mut metadata = metadata("mfb", config, nll, Some(reg));
    let certified = certify(config, reg, &mut metadata.notes);
    let (mut rec, mut x) = Recorder::new(opts, nll)?;
    let s = sensitivity(nll.operator().as_ref())?;
    let (tau, lambda) = (config.tau, config.lambda);

    let mut ctx = SurrogateContext::build_with_sensitivity(nll, &x, s.clone())?;
    let mut g = reg.eval(&x)?;
    let initial = rec.record(ctx.anchor_value(nll), g, lambda, 0.0, &x)?;
    let mut records = Vec::with_capacity(config.iterations);
    for n in 0..config.iterations {
        let u = if lambda == 0.0 { x.clone() } else { gs_denoise(reg, &x, tau * lambda)? };
        let next = ctx.prox(&u, config.data_step())?;
        let residual_sq = next.dist_sq(&x)?;
        ctx = SurrogateContext::build_with_sensitivity(nll, &next, s.clone())?;
        x = next;
        g = reg.eval(&x)?;
        rec.observe(n, &x);
        records.push(rec.record(ctx.anchor_value(nll), g, lambda, residual_sq, &x)?);
        if should_stop(config, residual_sq, &x) {
            break;
        }
    }
    metadata.iterations_run = records.len();
    Ok(SolveResult {
        reconstruction: x.clone(),
        last_iterate: x,
        trace: ConvergenceTrace { initial, records },
        certified,
        metadata,
    })
}

/// Plug-and-play MM in its two-step form:
///
/// ```text
/// x½   = λτ·D(x) + (1 − λτ)·x            D = Id − ∇g
/// x_EM = (x̃/s)·Aᵀ(ŷ/(A x̃ + b))          x̃ = x (or x½, see EmAnchor)
/// x⁺   = ½[ x½ − τs + √((x½ − τs)² + 4τ·s·x_EM) ]
/// ```
///
/// With a background `b = σ²` (shifted-Poisson data) the reported
/// reconstruction is `max(x − σ², 0)`; [`SolveResult::last_iterate`] keeps the
/// uncorrected iterate.
pub fn pnp_mm_run(nll: &PoissonNll, reg: &dyn Regularizer, config: &SolverConfig) -> Result<SolveResult> {
    pnp_mm_run_with(nll, reg, config, RunOptions::default())
}

pub fn pnp_mm_run_with(
    nll: &PoissonNll,
    reg: &dyn Regularizer,
    config: &SolverConfig,
    opts: RunOptions<'_>,
) -> Result<SolveResult> {
    config.validate()?;
    let mut metadata = metadata("pnp_mm", config, nll, Some(reg));
    let mut certified = certify(config, reg, &mut metadata.notes);
    if config.em_anchor == EmAnchor::HalfStep {
        metadata.notes.push("majorant anchored at the half step".into());
        certified = false;
    }
    let (mut rec, mut x) = Recorder::new(opts, nll)?;
    let s = sensitivity(nll.operator().as_ref())?;
    let (lambda, data_tau) = (config.lambda, config.data_step());
    let mix = config.lambda * config.tau;
    let background = nll.background();
    let corrected = |x: &Raster| if background > 0.0 { x.map(|v| (v - background).max(0.0)) } else { x.clone() };

    let mut ctx = SurrogateContext::build_with_sensitivity(nll, &x, s.clone())?;
    let initial = rec.record(ctx.anchor_value(nll), reg.eval(&x)?, lambda, 0.0, &corrected(&x))?;
    let mut records = Vec::with_capacity(config.iterations);
    for n in 0..config.iterations {
        let half = if mix == 0.0 {
            x.clone()
        } else {
            let denoised = gs_denoise(reg, &x, 1.0)?;
            denoised.zip_map(&x, |d, v| mix * d + (1.0 - mix) * v)?
        };
        let half_ctx;
        let anchor_ctx = match config.em_anchor {
            EmAnchor::Current => &ctx,
            EmAnchor::HalfStep => {
                half_ctx = SurrogateContext::build_with_sensitivity(nll, &half.clamp_nonnegative(), s.clone())?;
                &half_ctx
            }
        };
        // s·x_EM equals the EM numerator t of the anchor, so the data step is
        // the majorant's prox evaluated at the half step.
        let next = anchor_ctx.prox(&half, data_tau)?;
        let residual_sq = next.dist_sq(&x)?;
        ctx = SurrogateContext::build_with_sensitivity(nll, &next, s.clone())?;
        x = next;
        rec.observe(n, &x);
        records.push(rec.record(ctx.anchor_value(nll), reg.eval(&x)?, lambda, residual_sq, &corrected(&x))?);
        if should_stop(config, residual_sq, &x) {
            break;
        }
    }
    if background > 0.0 {
        metadata.post_processing.push(format!("subtracted background {background} and clamped at 0"));
    }
    metadata.iterations_run = records.len();
    Ok(SolveResult {
        reconstruction: corrected(&x),
        last_iterate: x,
        trace: ConvergenceTrace { initial, records },
        certified,
        metadata,
    })
}

/// One gradient-step denoising of the reconstruction, clamped at zero. The
/// step is logged in the metadata and never enters the trace.
pub fn final_denoise(result: &mut SolveResult, reg: &dyn Regularizer, tau: f64) -> Result<Raster> {
    let out = gs_denoise(reg, &result.reconstruction, tau)?.clamp_nonnegative();
    result.metadata.post_processing.push(format!("final gradient-step denoise with tau={tau}"));
    Ok(out)
}

/// `h⁽ⁿ⁺¹⁾ ≤ h⁽ⁿ⁾ + tol` along the whole trace, starting from `x⁽⁰⁾`.
pub fn monotonicity_check(trace: &ConvergenceTrace, tol: f64) -> bool {
    let h: Vec<f64> = trace.h_values().collect();
    h.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Outcome of [`rate_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateCheck {
    Holds,
    /// The bound fails first at this `N`.
    Violated {
        n: usize,
        min_residual_sq: f64,
        bound: f64,
    },
    /// `τ·λ·L ≥ 1` or split step sizes: the bound does not apply.
    NotApplicable,
}

impl RateCheck {
    pub fn passed(&self) -> bool {
        matches!(self, RateCheck::Holds)
    }
}

/// Absolute slack on `h(x⁽⁰⁾) − h_min`, matching the monotonicity tolerance.
pub const RATE_SLACK: f64 = 1e-10;

/// Checks `min_{n<N} ‖x⁽ⁿ⁺¹⁾ − x⁽ⁿ⁾‖² ≤ (h(x⁽⁰⁾) − h_min) / (N·(1/(2τ) − λL/2))`
/// for every `N`, with the trace minimum standing in for `inf h`.
pub fn rate_check(trace: &ConvergenceTrace, config: &SolverConfig) -> RateCheck {
    let decrease = 1.0 / (2.0 * config.tau) - config.lambda * config.lipschitz_bound / 2.0;
    if config.data_tau.is_some() || !(decrease > 0.0) {
        return RateCheck::NotApplicable;
    }
    let h_min = trace.h_values().fold(f64::INFINITY, f64::min);
    let budget = trace.initial.h - h_min + RATE_SLACK;
    let mut min_residual_sq = f64::INFINITY;
    for (k, r) in trace.records.iter().enumerate() {
        min_residual_sq = min_residual_sq.min(r.residual_sq);
        let n = k + 1;
        let bound = budget / (n as f64 * decrease);
        if !(min_residual_sq <= bound) {
            return RateCheck::Violated { n, min_residual_sq, bound };
        }
    }
    RateCheck::Holds
}
