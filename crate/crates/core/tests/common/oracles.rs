//! Reference implementations sharing no code with the library.

/// Minimizer over `x ≥ 0` of `φ(x) = s·x − t·ln x + (x − u)²/(2τ)` by
/// golden-section search. Points are compared through the exact difference
/// `φ(a) − φ(b)`, which keeps the comparison accurate next to the minimum.
pub fn golden_prox(s: f64, t: f64, u: f64, tau: f64) -> f64 {
    let diff = |a: f64, b: f64| -> f64 {
        let log_term = if t == 0.0 {
            0.0
        } else if a == 0.0 {
            return f64::INFINITY;
        } else if b == 0.0 {
            return f64::NEG_INFINITY;
        } else {
            t * ((a - b) / b).ln_1p()
        };
        (a - b) * (s + (a + b - 2.0 * u) / (2.0 * tau)) - log_term
    };
    let shifted = u - tau * s;
    let mut lo = 0.0_f64;
    let mut hi = shifted.max(0.0) + (tau * t).sqrt() + 1.0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    for _ in 0..400 {
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        if diff(a, b) < 0.0 {
            hi = b;
            b = a;
            a = hi - inv_phi * (hi - lo);
        } else {
            lo = a;
            a = b;
            b = lo + inv_phi * (hi - lo);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The boundary wins when the objective still decreases towards zero.
    if t == 0.0 && diff(0.0, mid) <= 0.0 {
        0.0
    } else {
        mid
    }
}

/// Mean SSIM by direct summation over every fully contained 11×11 window
/// with Gaussian weights (σ = 1.5), K1 = 0.01, K2 = 0.03.
pub fn naive_ssim(a: &[f64], b: &[f64], width: usize, height: usize, peak: f64) -> f64 {
    const N: usize = 11;
    let mut weights = [[0.0; N]; N];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *w = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *w;
        }
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let mut acc = 0.0;
    let mut count = 0usize;
    for r in 0..=height - N {
        for c in 0..=width - N {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let w = weights[i][j] / total;
                    let (x, y) = (a[(r + i) * width + c + j], b[(r + i) * width + c + j]);
                    ma += w * x;
                    mb += w * y;
                    saa += w * x * x;
                    sbb += w * y * y;
                    sab += w * x * y;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

/// Central finite difference of `f` along coordinate `k` of `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], k: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
