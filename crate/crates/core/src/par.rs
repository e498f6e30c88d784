//! Data-parallel primitives with a sequential fallback.
//!
//! Every helper produces bit-identical output with and without the `parallel`
//! feature and regardless of the rayon thread count: maps are element-wise and
//! reductions use a fixed chunk partition combined in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many elements the helpers stay on the calling thread.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 2048;

/// Fixed reduction block. Changing it changes rounding, not correctness.
const SUM_CHUNK: usize = 1024;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Infinite partial sums are returned as-is; compensation would turn them
    /// into NaN.
    pub fn value(&self) -> f64 {
        if !self.sum.is_finite() {
            return self.sum;
        }
        self.sum + self.comp
    }
}

/// `out[k] = f(k)` for every index.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_THRESHOLD {
        out.par_iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
        return;
    }
    out.iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
}

pub fn map<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; n];
    fill(&mut out, f);
    out
}

/// Calls `f(row_index, row)` on consecutive `row_len`-sized rows of `out`.
pub fn for_each_row<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_THRESHOLD || out.len() / row_len > 1 && row_len >= 64 {
        out.par_chunks_mut(row_len).enumerate().for_each(|(r, row)| f(r, row));
        return;
    }
    out.chunks_mut(row_len).enumerate().for_each(|(r, row)| f(r, row));
}

/// Compensated `Σ f(k)` over `0..n` with a thread-count-independent result.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunk_sum = |c: usize| {
        let mut acc = CompensatedSum::default();
        for k in c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n) {
            acc.add(f(k));
        }
        acc.value()
    };
    let chunks = n.div_ceil(SUM_CHUNK);
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = if n >= PAR_THRESHOLD {
        (0..chunks).into_par_iter().map(chunk_sum).collect()
    } else {
        (0..chunks).map(chunk_sum).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..chunks).map(chunk_sum).collect();

    let mut acc = CompensatedSum::default();
    for p in partials {
        acc.add(p);
    }
    acc.value()
}

/// Runs independent closures, in parallel when enabled, returning results in
/// input order.
pub fn map_tasks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
