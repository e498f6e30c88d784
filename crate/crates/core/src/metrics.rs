//! Image-quality metrics: PSNR, SSIM, MAE, NRMSE and CNR.

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{Raster, Shape};

const SSIM_WINDOW: usize = 11;
const SSIM_STD: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn same_shape(truth: &Raster, estimate: &Raster) -> Result<()> {
    estimate.ensure_shape(truth.shape(), "estimate vs truth")
}

/// `10·log10(peak² / MSE)` in dB; `+∞` for identical images.
pub fn psnr(truth: &Raster, estimate: &Raster, peak: f64) -> Result<f64> {
    same_shape(truth, estimate)?;
    if !(peak > 0.0) {
        return Err(Error::Config(format!("psnr peak must be positive, got {peak}")));
    }
    let mse = truth.dist_sq(estimate)? / truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean absolute error, multiplied by `scale` (e.g. 3000 to map `[0, 1]` onto
/// a `[−1000, 2000]` HU window).
pub fn mae(truth: &Raster, estimate: &Raster, scale: f64) -> Result<f64> {
    same_shape(truth, estimate)?;
    let (a, b) = (truth.values(), estimate.values());
    Ok(scale * par::sum(a.len(), |k| (a[k] - b[k]).abs()) / a.len() as f64)
}

/// `‖estimate − truth‖₂ / ‖truth‖₂`.
pub fn nrmse(truth: &Raster, estimate: &Raster) -> Result<f64> {
    same_shape(truth, estimate)?;
    let norm = truth.norm_sq();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric("nrmse of an all-zero reference".into()));
    }
    Ok((truth.dist_sq(estimate)? / norm).sqrt())
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn ssim_taps() -> [f64; SSIM_WINDOW] {
    let h = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - h;
        *t = (-d * d / (2.0 * SSIM_STD * SSIM_STD)).exp();
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable "valid" filtering of `v` with the SSIM window.
fn window_filter(v: &[f64], shape: Shape, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (w, h) = (shape.width, shape.height);
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let horizontal = par::map(h * ow, |k| {
        let (r, c) = (k / ow, k % ow);
        taps.iter().enumerate().map(|(j, t)| t * v[r * w + c + j]).sum()
    });
    par::map(oh * ow, |k| {
        let (r, c) = (k / ow, k % ow);
        taps.iter().enumerate().map(|(i, t)| t * horizontal[(r + i) * ow + c]).sum()
    })
}

/// Mean structural similarity over all fully contained 11×11 Gaussian windows
/// (σ = 1.5, K1 = 0.01, K2 = 0.03) with dynamic range `peak`.
pub fn ssim(truth: &Raster, estimate: &Raster, peak: f64) -> Result<f64> {
    same_shape(truth, estimate)?;
    let shape = truth.shape();
    if shape.width < SSIM_WINDOW || shape.height < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            shape.width, shape.height
        )));
    }
    let taps = ssim_taps();
    let (a, b) = (truth.values(), estimate.values());
    let n = a.len();
    let mu_a = window_filter(a, shape, &taps);
    let mu_b = window_filter(b, shape, &taps);
    let aa = window_filter(&par::map(n, |k| a[k] * a[k]), shape, &taps);
    let bb = window_filter(&par::map(n, |k| b[k] * b[k]), shape, &taps);
    let ab = window_filter(&par::map(n, |k| a[k] * b[k]), shape, &taps);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let total = par::sum(mu_a.len(), |k| {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let (va, vb, cov) = (aa[k] - ma * ma, bb[k] - mb * mb, ab[k] - ma * mb);
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    });
    Ok(total / mu_a.len() as f64)
}

/// A labelled region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    shape: Shape,
    inside: Vec<bool>,
    label: String,
}

impl RoiMask {
    pub fn new(shape: Shape, inside: Vec<bool>, label: impl Into<String>) -> Result<Self> {
        crate::error::check_len("roi mask", shape.len(), inside.len())?;
        if !inside.iter().any(|&b| b) {
            return Err(Error::Config("roi mask has no pixel inside".into()));
        }
        Ok(RoiMask { shape, inside, label: label.into() })
    }

    /// Nonzero pixels of `raster` are inside.
    pub fn from_raster(raster: &Raster, label: impl Into<String>) -> Result<Self> {
        Self::new(raster.shape(), raster.values().iter().map(|&v| v != 0.0).collect(), label)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    fn pixels<'a>(&'a self, image: &'a Raster) -> impl Iterator<Item = f64> + 'a {
        image.values().iter().zip(&self.inside).filter(|(_, &m)| m).map(|(&v, _)| v)
    }
}

/// `(mean_a − mean_b) / std_b` with the population standard deviation.
pub fn cnr(image: &Raster, roi_a: &RoiMask, roi_b: &RoiMask) -> Result<f64> {
    image.ensure_shape(roi_a.shape, "roi_a")?;
    image.ensure_shape(roi_b.shape, "roi_b")?;
    let nb = roi_b.count();
    if nb < 2 {
        return Err(Error::UndefinedMetric(format!("roi {:?} needs at least two pixels", roi_b.label)));
    }
    let mean_a = roi_a.pixels(image).sum::<f64>() / roi_a.count() as f64;
    let mean_b = roi_b.pixels(image).sum::<f64>() / nb as f64;
    let var_b = roi_b.pixels(image).map(|v| (v - mean_b) * (v - mean_b)).sum::<f64>() / nb as f64;
    if var_b == 0.0 {
        return Err(Error::UndefinedMetric(format!("roi {:?} has zero standard deviation", roi_b.label)));
    }
    Ok((mean_a - mean_b) / var_b.sqrt())
}
