//! Image and measurement containers plus the flat-vector utilities shared by
//! every module.

use crate::error::{check_len, Error, Result};
use crate::par;

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize) -> Self {
        Shape { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A 2-D image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("raster must be non-empty, got {width}x{height}")));
        }
        check_len("raster values", width * height, values.len())?;
        Ok(Raster { width, height, values })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Raster { width: shape.width, height: shape.height, values: vec![value; shape.len()] }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::filled(shape, 1.0)
    }

    pub(crate) fn from_parts(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Raster { width: shape.width, height: shape.height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    /// Smallest entry, or `None` if any entry is NaN.
    pub fn min_value(&self) -> Option<f64> {
        self.values.iter().try_fold(f64::INFINITY, |m, &v| if v.is_nan() { None } else { Some(m.min(v)) })
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn ensure_shape(&self, shape: Shape, what: &str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Dimension(format!(
                "{what}: expected {}x{}, got {}x{}",
                shape.width, shape.height, self.width, self.height
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_nonnegative(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|&v| !(v >= 0.0)) {
            Some(k) => Err(Error::Domain(format!("{what}: entry {k} is {}", self.values[k]))),
            None => Ok(()),
        }
    }

    /// Element-wise map into a new raster of the same shape.
    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> Raster {
        let v = &self.values;
        Raster::from_parts(self.shape(), par::map(v.len(), |k| f(v[k])))
    }

    /// Element-wise combination of two rasters of the same shape.
    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync + Send>(&self, other: &Raster, f: F) -> Result<Raster> {
        other.ensure_shape(self.shape(), "zip_map operand")?;
        let (a, b) = (&self.values, &other.values);
        Ok(Raster::from_parts(self.shape(), par::map(a.len(), |k| f(a[k], b[k]))))
    }

    pub fn clamp_nonnegative(&self) -> Raster {
        self.map(|v| v.max(0.0))
    }

    pub fn sum(&self) -> f64 {
        let v = &self.values;
        par::sum(v.len(), |k| v[k])
    }

    pub fn norm_sq(&self) -> f64 {
        let v = &self.values;
        par::sum(v.len(), |k| v[k] * v[k])
    }

    /// `‖self − other‖²`.
    pub fn dist_sq(&self, other: &Raster) -> Result<f64> {
        other.ensure_shape(self.shape(), "dist_sq operand")?;
        let (a, b) = (&self.values, &other.values);
        Ok(par::sum(a.len(), |k| (a[k] - b[k]) * (a[k] - b[k])))
    }
}

/// A flat vector of detector bins (observed counts, expected counts, ratios).
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    bins: Vec<f64>,
}

impl Measurement {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Dimension("measurement must have at least one bin".into()));
        }
        Ok(Measurement { bins })
    }

    pub(crate) fn from_vec(bins: Vec<f64>) -> Self {
        Measurement { bins }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Measurement { bins: vec![value; len] }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [f64] {
        &mut self.bins
    }

    pub fn into_bins(self) -> Vec<f64> {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn ensure_len(&self, len: usize, what: &str) -> Result<()> {
        check_len(what, len, self.bins.len())
    }

    pub fn ensure_nonnegative(&self, what: &str) -> Result<()> {
        match self.bins.iter().position(|&v| !(v >= 0.0)) {
            Some(k) => Err(Error::Domain(format!("{what}: bin {k} is {}", self.bins[k]))),
            None => Ok(()),
        }
    }

    /// Bins at the given indices, in order.
    pub fn gather(&self, indices: &[usize]) -> Measurement {
        Measurement { bins: indices.iter().map(|&i| self.bins[i]).collect() }
    }

    pub fn sum(&self) -> f64 {
        let v = &self.bins;
        par::sum(v.len(), |k| v[k])
    }
}

/// `Σ a[k]·b[k]` with compensated, thread-count-independent summation.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("dot operands", a.len(), b.len())?;
    Ok(par::sum(a.len(), |k| a[k] * b[k]))
}
