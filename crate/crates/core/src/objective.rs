//! Data fidelity, gradient-step regularizers and the composite objective
//! `h = f + λ·g`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operators::{Convolution, Kernel, LinearOperator, SharedOperator};
use crate::par;
use crate::raster::{Measurement, Raster, Shape};

/// Poisson negative log-likelihood `Σ_i [(Ax)_i + b − y_i·log((Ax)_i + b)]`.
///
/// `b` is the constant background of the shifted-Poisson model (`σ²`), zero
/// for plain Poisson data.
#[derive(Debug, Clone)]
pub struct PoissonNll {
    y: Measurement,
    op: SharedOperator,
    background: f64,
}

impl PoissonNll {
    pub fn new(y: Measurement, op: SharedOperator, background: f64) -> Result<Self> {
        y.ensure_len(op.output_len(), "measurement vs operator output")?;
        y.ensure_nonnegative("poisson data")?;
        if !(background >= 0.0 && background.is_finite()) {
            return Err(Error::Domain(format!("background must be nonnegative, got {background}")));
        }
        Ok(PoissonNll { y, op, background })
    }

    pub fn data(&self) -> &Measurement {
        &self.y
    }

    pub fn operator(&self) -> &SharedOperator {
        &self.op
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn input_shape(&self) -> Shape {
        self.op.input_shape()
    }

    /// `f(x)`, `+∞` when a positive count meets a zero expected value.
    pub fn eval(&self, x: &Raster) -> Result<f64> {
        x.ensure_nonnegative("nll argument")?;
        let ax = self.op.apply(x)?;
        Ok(nll_from_projection(self.y.bins(), ax.bins(), self.background))
    }
}

/// NLL given the precomputed projection `Ax`. Uses `0·log 0 = 0`.
pub fn nll_from_projection(y: &[f64], ax: &[f64], background: f64) -> f64 {
    debug_assert_eq!(y.len(), ax.len());
    par::sum(y.len(), |i| {
        let p = ax[i] + background;
        if y[i] == 0.0 {
            p
        } else if p > 0.0 {
            p - y[i] * p.ln()
        } else {
            f64::INFINITY
        }
    })
}

/// Explicit regularizer `g_σ` with a Lipschitz gradient, whose gradient step
/// `x − τ∇g_σ(x)` is the plug-in denoiser.
pub trait Regularizer: Debug + Send + Sync {
    fn eval(&self, x: &Raster) -> Result<f64>;

    fn grad(&self, x: &Raster) -> Result<Raster>;

    /// Noise level the regularizer was configured for.
    fn sigma(&self) -> f64;

    /// Upper bound on the Lipschitz constant of `grad`.
    fn lipschitz_bound(&self) -> f64;

    /// Whether `eval`/`grad` form a genuine potential/gradient pair, which the
    /// convergence guarantees need.
    fn is_gradient_step(&self) -> bool {
        true
    }
}

/// Gradient-step denoiser `D(x) = x − τ∇g(x)`.
pub fn gs_denoise(reg: &dyn Regularizer, x: &Raster, tau: f64) -> Result<Raster> {
    if tau == 0.0 {
        return Ok(x.clone());
    }
    let g = reg.grad(x)?;
    x.zip_map(&g, |v, d| v - tau * d)
}

/// `h(x) = f(x) + λ·g(x)`.
pub fn composite_eval(nll: &PoissonNll, reg: &dyn Regularizer, lambda: f64, x: &Raster) -> Result<f64> {
    let f = nll.eval(x)?;
    if lambda == 0.0 {
        return Ok(f);
    }
    Ok(f + lambda * reg.eval(x)?)
}

/// `g(x) = ‖x − Bx‖²` for a periodic, symmetric, mass-preserving smoother `B`.
#[derive(Debug, Clone)]
pub struct LinearSmoother {
    blur: Convolution,
    sigma: f64,
    lipschitz: f64,
}

impl LinearSmoother {
    pub fn new(kernel: Kernel, sigma: f64, shape: Shape) -> Result<Self> {
        if (kernel.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("smoother kernel must sum to 1, sums to {}", kernel.sum())));
        }
        if !kernel.is_symmetric() {
            return Err(Error::Config("smoother kernel must be symmetric".into()));
        }
        let lipschitz = 2.0 * max_symbol_gap_sq(&kernel, shape);
        Ok(LinearSmoother { blur: Convolution::new(kernel, shape)?, sigma, lipschitz })
    }

    /// Gaussian smoother whose standard deviation (pixels) is `sigma`, on a
    /// `2⌈3σ⌉+1` support.
    pub fn gaussian(sigma: f64, shape: Shape) -> Result<Self> {
        let size = 2 * (3.0 * sigma).ceil() as usize + 1;
        Self::new(Kernel::gaussian(size, sigma)?, sigma, shape)
    }

    fn residual(&self, x: &Raster) -> Result<Raster> {
        let bx = self.blur.apply(x)?;
        let b = bx.bins();
        let v = x.values();
        Raster::new(x.width(), x.height(), par::map(v.len(), |k| v[k] - b[k]))
    }
}

/// `max_ω |1 − B̂(ω)|²` over the DFT grid of `shape`; the symbol is real for a
/// symmetric kernel.
fn max_symbol_gap_sq(kernel: &Kernel, shape: Shape) -> f64 {
    let (hy, hx) = ((kernel.height() / 2) as f64, (kernel.width() / 2) as f64);
    let taps: Vec<(f64, f64, f64)> = (0..kernel.height())
        .flat_map(|i| (0..kernel.width()).map(move |j| (i, j)))
        .filter(|&(i, j)| kernel.get(i, j) != 0.0)
        .map(|(i, j)| (i as f64 - hy, j as f64 - hx, kernel.get(i, j)))
        .collect();
    let (w, h) = (shape.width as f64, shape.height as f64);
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..shape.len())
        .map(|k| {
            let (p, q) = ((k / shape.width) as f64, (k % shape.width) as f64);
            let symbol: f64 = taps.iter().map(|&(di, dj, wt)| wt * (two_pi * (di * p / h + dj * q / w)).cos()).sum();
            (1.0 - symbol) * (1.0 - symbol)
        })
        .fold(0.0, f64::max)
}

impl Regularizer for LinearSmoother {
    fn eval(&self, x: &Raster) -> Result<f64> {
        Ok(self.residual(x)?.norm_sq())
    }

    fn grad(&self, x: &Raster) -> Result<Raster> {
        let r = self.residual(x)?;
        let btr = self.blur.adjoint(&Measurement::new(r.values().to_vec())?)?;
        r.zip_map(&btr, |a, b| 2.0 * (a - b))
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
}

/// Smoothed total variation `Σ_p √(dx² + dy² + ε²) − ε` with periodic forward
/// differences.
#[derive(Debug, Clone)]
pub struct SmoothedTv {
    epsilon: f64,
    sigma: f64,
}

impl SmoothedTv {
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_sigma(epsilon, epsilon)
    }

    pub fn with_sigma(epsilon: f64, sigma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("TV smoothing must be positive, got {epsilon}")));
        }
        Ok(SmoothedTv { epsilon, sigma })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[inline]
fn forward_diffs(v: &[f64], w: usize, h: usize, r: usize, c: usize) -> (f64, f64) {
    let x = v[r * w + c];
    (v[r * w + (c + 1) % w] - x, v[((r + 1) % h) * w + c] - x)
}

impl Regularizer for SmoothedTv {
    fn eval(&self, x: &Raster) -> Result<f64> {
        let (w, h, v, eps) = (x.width(), x.height(), x.values(), self.epsilon);
        Ok(par::sum(v.len(), |k| {
            let (dx, dy) = forward_diffs(v, w, h, k / w, k % w);
            // √(a² + ε²) − ε, rewritten to avoid cancellation for small gradients
            let a2 = dx * dx + dy * dy;
            a2 / ((a2 + eps * eps).sqrt() + eps)
        }))
    }

    fn grad(&self, x: &Raster) -> Result<Raster> {
        let (w, h, v, eps) = (x.width(), x.height(), x.values(), self.epsilon);
        let weight = |r: usize, c: usize| {
            let (dx, dy) = forward_diffs(v, w, h, r, c);
            let inv = 1.0 / (dx * dx + dy * dy + eps * eps).sqrt();
            (dx * inv, dy * inv)
        };
        let mut out = vec![0.0; v.len()];
        par::for_each_row(&mut out, w, |r, row| {
            let up = (r + h - 1) % h;
            for (c, o) in row.iter_mut().enumerate() {
                let left = (c + w - 1) % w;
                let (px, py) = weight(r, c);
                let (lx, _) = weight(r, left);
                let (_, uy) = weight(up, c);
                *o = lx + uy - px - py;
            }
        });
        Raster::new(w, h, out)
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn lipschitz_bound(&self) -> f64 {
        8.0 / self.epsilon
    }
}

/// Zero regularizer, for unregularized runs through the regularized solvers.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRegularizer;

impl Regularizer for NoRegularizer {
    fn eval(&self, _: &Raster) -> Result<f64> {
        Ok(0.0)
    }

    fn grad(&self, x: &Raster) -> Result<Raster> {
        Ok(Raster::zeros(x.shape()))
    }

    fn sigma(&self) -> f64 {
        0.0
    }

    fn lipschitz_bound(&self) -> f64 {
        f64::MIN_POSITIVE
    }
}

type DenoiseFn = Arc<dyn Fn(&Raster) -> Result<Raster> + Send + Sync>;

/// Wraps an arbitrary denoiser `D` as `∇g = x − D(x)` and `g = ‖x − D(x)‖²`.
///
/// The pair is generally not a potential/gradient pair, so runs using it are
/// never certified.
pub struct PluggedDenoiser {
    denoise: DenoiseFn,
    sigma: f64,
    lipschitz: f64,
}

impl PluggedDenoiser {
    pub fn new<F>(denoise: F, sigma: f64, lipschitz: f64) -> Self
    where
        F: Fn(&Raster) -> Result<Raster> + Send + Sync + 'static,
    {
        PluggedDenoiser { denoise: Arc::new(denoise), sigma, lipschitz }
    }
}

impl Debug for PluggedDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PluggedDenoiser").field("sigma", &self.sigma).finish_non_exhaustive()
    }
}

impl Regularizer for PluggedDenoiser {
    fn eval(&self, x: &Raster) -> Result<f64> {
        x.dist_sq(&(self.denoise)(x)?)
    }

    fn grad(&self, x: &Raster) -> Result<Raster> {
        x.zip_map(&(self.denoise)(x)?, |a, b| a - b)
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }

    fn is_gradient_step(&self) -> bool {
        false
    }
}
