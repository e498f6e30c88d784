//! Seeded Poisson and Poisson–Gaussian measurement simulation.
//!
//! Randomness is counter-based: bin `i` draws from a ChaCha8 stream keyed by
//! `(seed, i)`, so every bin's sample is independent of evaluation order and
//! thread count. Poisson variates use exact inversion for means up to 30 and
//! Hörmann's PTRS transformed rejection above.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par;
use crate::raster::Measurement;

const INVERSION_LIMIT: f64 = 30.0;
const GAUSS_STREAM: u64 = 1 << 63;

/// Gain `ζ`, electronic noise `σ` and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub zeta: f64,
    pub gauss_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(zeta: f64, gauss_sigma: f64, seed: u64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::Config(format!("gain must be positive, got {zeta}")));
        }
        if !(gauss_sigma >= 0.0 && gauss_sigma.is_finite()) {
            return Err(Error::Config(format!("gaussian sigma must be nonnegative, got {gauss_sigma}")));
        }
        Ok(NoiseSpec { zeta, gauss_sigma, seed })
    }

    pub fn poisson(zeta: f64, seed: u64) -> Result<Self> {
        Self::new(zeta, 0.0, seed)
    }
}

/// Whether Poisson samples are returned as raw counts `k` or as `k/ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountScale {
    Counts,
    Scaled,
}

fn bin_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `ln k!`, exact-table for small `k`, Stirling series beyond.
fn ln_factorial(k: f64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.791_759_469_228_055,
        3.178_053_830_347_146,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
    ];
    if k < 10.0 {
        return TABLE[k as usize];
    }
    let n = k + 1.0;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n - 0.5) * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

fn poisson_inversion<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // The cap only matters when u rounds above the accumulated CDF.
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_mean = mean.ln();
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * log_mean - ln_factorial(k) {
            return k as u64;
        }
    }
}

pub(crate) fn poisson_variate<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean <= INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

/// Draws `k[i] ~ Poisson(ζ·mean[i])` independently per bin.
pub fn sample_poisson(mean: &Measurement, spec: &NoiseSpec, scale: CountScale) -> Result<Measurement> {
    mean.ensure_nonnegative("poisson mean")?;
    let m = mean.bins();
    let (zeta, seed) = (spec.zeta, spec.seed);
    let bins = par::map(m.len(), |i| {
        let k = poisson_variate(zeta * m[i], &mut bin_rng(seed, i as u64)) as f64;
        match scale {
            CountScale::Counts => k,
            CountScale::Scaled => k / zeta,
        }
    });
    Measurement::new(bins)
}

/// `z = k/ζ + ε` with `k ~ Poisson(ζ·mean)` and `ε ~ N(0, σ²)`.
///
/// The Poisson part matches [`sample_poisson`] with the same seed; the
/// Gaussian part comes from a disjoint stream.
pub fn sample_poisson_gaussian(mean: &Measurement, spec: &NoiseSpec) -> Result<Measurement> {
    let mut z = sample_poisson(mean, spec, CountScale::Scaled)?;
    if spec.gauss_sigma > 0.0 {
        let (sigma, seed) = (spec.gauss_sigma, spec.seed);
        let y = z.bins().to_vec();
        par::fill(z.bins_mut(), |i| {
            let eps: f64 = bin_rng(seed, GAUSS_STREAM | i as u64).sample(StandardNormal);
            y[i] + sigma * eps
        });
    }
    Ok(z)
}

/// Shifted-Poisson preprocessing `ŷ = max(z + σ², 0)`.
pub fn shifted_poisson_preprocess(z: &Measurement, gauss_sigma: f64) -> Measurement {
    let shift = gauss_sigma * gauss_sigma;
    let b = z.bins();
    Measurement::from_vec(par::map(b.len(), |i| (b[i] + shift).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, v: f64) -> Measurement {
        Measurement::filled(n, v)
    }

    #[test]
    fn zero_mean_gives_zero_counts() {
        let spec = NoiseSpec::poisson(5.0, 1).unwrap();
        let k = sample_poisson(&flat(1000, 0.0), &spec, CountScale::Counts).unwrap();
        assert!(k.bins().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_output() {
        let spec = NoiseSpec::new(7.0, 0.3, 42).unwrap();
        let mean = Measurement::new((0..500).map(|i| (i % 13) as f64 * 0.9).collect()).unwrap();
        let a = sample_poisson_gaussian(&mean, &spec).unwrap();
        let b = sample_poisson_gaussian(&mean, &spec).unwrap();
        assert_eq!(a, b);
        let c = sample_poisson_gaussian(&mean, &NoiseSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn counts_are_nonnegative_integers() {
        let spec = NoiseSpec::poisson(3.0, 9).unwrap();
        let mean = Measurement::new((0..2000).map(|i| (i % 40) as f64).collect()).unwrap();
        let k = sample_poisson(&mean, &spec, CountScale::Counts).unwrap();
        assert!(k.bins().iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn negative_mean_rejected() {
        let spec = NoiseSpec::poisson(1.0, 0).unwrap();
        let mean = Measurement::new(vec![1.0, -0.1]).unwrap();
        assert!(matches!(sample_poisson(&mean, &spec, CountScale::Counts), Err(Error::Domain(_))));
    }

    fn mean_and_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn empirical_mean_within_three_standard_errors() {
        // ζ·mean = 50 exercises the rejection sampler, 20 the inversion path.
        for (zeta, mean) in [(5.0, 10.0), (4.0, 5.0)] {
            let spec = NoiseSpec::poisson(zeta, 2024).unwrap();
            let y = sample_poisson(&flat(100_000, mean), &spec, CountScale::Scaled).unwrap();
            let (m, _) = mean_and_var(y.bins());
            let se = (mean / zeta / 100_000.0).sqrt();
            assert!((m - mean).abs() <= 3.0 * se, "zeta={zeta} mean={m}");
        }
    }

    #[test]
    fn poisson_gaussian_variance() {
        let (zeta, mean, sigma) = (5.0, 10.0, 0.7);
        let spec = NoiseSpec::new(zeta, sigma, 77).unwrap();
        let z = sample_poisson_gaussian(&flat(100_000, mean), &spec).unwrap();
        let (_, var) = mean_and_var(z.bins());
        let expected = mean / zeta + sigma * sigma;
        // standard error of a sample variance is about var·sqrt(2/n)
        assert!((var - expected).abs() <= 4.0 * expected * (2.0f64 / 100_000.0).sqrt(), "var={var}");
    }

    #[test]
    fn zero_sigma_matches_scaled_poisson() {
        let spec = NoiseSpec::new(5.0, 0.0, 3).unwrap();
        let mean = Measurement::new((0..300).map(|i| i as f64 * 0.1).collect()).unwrap();
        assert_eq!(
            sample_poisson_gaussian(&mean, &spec).unwrap(),
            sample_poisson(&mean, &spec, CountScale::Scaled).unwrap()
        );
    }

    #[test]
    fn zero_mean_unit_sigma_is_standard_normal() {
        let spec = NoiseSpec::new(1.0, 1.0, 8).unwrap();
        let z = sample_poisson_gaussian(&flat(100_000, 0.0), &spec).unwrap();
        let (m, var) = mean_and_var(z.bins());
        assert!(m.abs() < 3.0 / (100_000f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
        assert!(z.bins().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn shifted_preprocess_rules() {
        let z = Measurement::new(vec![-0.5, 2.0]).unwrap();
        assert_eq!(shifted_poisson_preprocess(&z, 0.5).bins(), &[0.0, 2.25]);
        let z = Measurement::new(vec![0.0, 1.5, 3.0]).unwrap();
        assert_eq!(shifted_poisson_preprocess(&z, 0.0), z);
        let z = Measurement::new(vec![-3.0]).unwrap();
        assert_eq!(shifted_poisson_preprocess(&z, 1.0).bins(), &[0.0]);
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        for k in [10u32, 15, 40, 200] {
            let direct: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k as f64) - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(NoiseSpec::new(0.0, 0.0, 1).is_err());
        assert!(NoiseSpec::new(1.0, -1.0, 1).is_err());
    }
}
