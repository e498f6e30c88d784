use std::sync::Arc;

use super::{interleaved, LinearOperator, SharedOperator};
use crate::error::{Error, Result};
use crate::par;
use crate::raster::{Measurement, Raster, Shape};

/// A nonnegative convolution kernel with odd dimensions, anchored at its
/// center tap.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel dimensions must be odd, got {width}x{height}")));
        }
        crate::error::check_len("kernel weights", width * height, weights.len())?;
        if let Some(k) = weights.iter().position(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("kernel weight {k} is {}", weights[k])));
        }
        Ok(Kernel { width, height, weights })
    }

    pub fn delta() -> Self {
        Kernel { width: 1, height: 1, weights: vec![1.0] }
    }

    /// `size × size` box kernel summing to one.
    pub fn uniform(size: usize) -> Result<Self> {
        Self::new(size, size, vec![1.0 / (size * size) as f64; size * size])
    }

    /// Isotropic sampled Gaussian normalized to unit sum.
    pub fn gaussian(size: usize, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::Config(format!("gaussian std must be positive, got {std}")));
        }
        let h = (size / 2) as f64;
        let mut weights: Vec<f64> = (0..size * size)
            .map(|k| {
                let (i, j) = ((k / size) as f64 - h, (k % size) as f64 - h);
                (-(i * i + j * j) / (2.0 * std * std)).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(size, size, weights)
    }

    /// Parses the plain-text form: a `<width> <height>` header line followed by
    /// whitespace-separated row-major weights.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty kernel file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Config(format!("bad kernel header token {t:?}"))))
            .collect::<Result<_>>()?;
        let [width, height] = dims[..] else {
            return Err(Error::Config(format!("kernel header must be '<width> <height>', got {header:?}")));
        };
        let weights = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("bad kernel weight {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, weights)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.width, self.height);
        for row in self.weights.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:.17e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.width + j]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Invariant under a 180° rotation, which makes correlation equal
    /// convolution.
    pub fn is_symmetric(&self) -> bool {
        let n = self.weights.len();
        (0..n).all(|k| self.weights[k] == self.weights[n - 1 - k])
    }
}

/// Periodic 2-D convolution `y = k ⊛ x`, optionally keeping only a subset of
/// output rows.
#[derive(Debug, Clone)]
pub struct Convolution {
    kernel: Arc<Kernel>,
    shape: Shape,
    rows: Vec<usize>,
    // Output slot of each image row, if kept.
    slot: Vec<Option<usize>>,
}

impl Convolution {
    pub fn new(kernel: Kernel, shape: Shape) -> Result<Self> {
        if kernel.width > shape.width || kernel.height > shape.height {
            return Err(Error::Dimension(format!(
                "kernel {}x{} does not fit in image {}x{}",
                kernel.width, kernel.height, shape.width, shape.height
            )));
        }
        Ok(Self::with_rows(Arc::new(kernel), shape, (0..shape.height).collect()))
    }

    fn with_rows(kernel: Arc<Kernel>, shape: Shape, rows: Vec<usize>) -> Self {
        let mut slot = vec![None; shape.height];
        for (k, &r) in rows.iter().enumerate() {
            slot[r] = Some(k);
        }
        Convolution { kernel, shape, rows, slot }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Kernel tap offsets relative to the anchor.
    fn offsets(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        let (hy, hx) = ((self.kernel.height / 2) as isize, (self.kernel.width / 2) as isize);
        let kw = self.kernel.width;
        self.kernel
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(move |(k, &w)| ((k / kw) as isize - hy, (k % kw) as isize - hx, w))
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// `acc[c] += w · src[(c − shift) mod n]`.
#[inline]
fn add_shifted(acc: &mut [f64], src: &[f64], shift: isize, w: f64) {
    let n = src.len();
    let s = wrap(shift, n);
    // acc[c] pairs with src[c - s] for c >= s, and src[c + n - s] before that.
    let (head, tail) = acc.split_at_mut(s);
    for (a, &v) in tail.iter_mut().zip(&src[..n - s]) {
        *a += w * v;
    }
    for (a, &v) in head.iter_mut().zip(&src[n - s..]) {
        *a += w * v;
    }
}

impl LinearOperator for Convolution {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_len(&self) -> usize {
        self.rows.len() * self.shape.width
    }

    fn apply(&self, x: &Raster) -> Result<Measurement> {
        x.ensure_shape(self.shape, "convolution input")?;
        let (w, h) = (self.shape.width, self.shape.height);
        let taps: Vec<_> = self.offsets().collect();
        let src = x.values();
        let mut out = vec![0.0; self.output_len()];
        par::for_each_row(&mut out, w, |k, row| {
            let r = self.rows[k] as isize;
            for &(di, dj, wt) in &taps {
                let sr = wrap(r - di, h);
                add_shifted(row, &src[sr * w..(sr + 1) * w], dj, wt);
            }
        });
        Ok(Measurement::from_vec(out))
    }

    fn adjoint(&self, v: &Measurement) -> Result<Raster> {
        v.ensure_len(self.output_len(), "convolution adjoint input")?;
        let (w, h) = (self.shape.width, self.shape.height);
        let taps: Vec<_> = self.offsets().collect();
        let bins = v.bins();
        let mut out = vec![0.0; self.shape.len()];
        par::for_each_row(&mut out, w, |p, row| {
            for &(di, dj, wt) in &taps {
                if let Some(k) = self.slot[wrap(p as isize + di, h)] {
                    add_shifted(row, &bins[k * w..(k + 1) * w], -dj, wt);
                }
            }
        });
        Ok(Raster::from_parts(self.shape, out))
    }

    fn subset_axis_len(&self) -> usize {
        self.rows.len()
    }

    fn restrict(&self, index: usize, count: usize) -> Result<(SharedOperator, Vec<usize>)> {
        let picks = interleaved(self.rows.len(), index, count)?;
        let w = self.shape.width;
        let outputs = picks.iter().flat_map(|&k| k * w..(k + 1) * w).collect();
        let rows = picks.iter().map(|&k| self.rows[k]).collect();
        Ok((Arc::new(Self::with_rows(Arc::clone(&self.kernel), self.shape, rows)), outputs))
    }
}
