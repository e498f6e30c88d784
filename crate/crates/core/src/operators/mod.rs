//! Nonnegative linear forward operators with exact adjoints.
//!
//! Every operator maps a [`Raster`] to a [`Measurement`] and back through its
//! adjoint. The sensitivity image `Aᵀ1` normalizes multiplicative updates, and
//! [`split_subsets`] partitions the measurement axis for ordered-subsets EM.

mod conv;
mod radon;

pub use conv::{Convolution, Kernel};
pub use radon::{Projector, ProjectorGeometry};

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{dot, Measurement, Raster, Shape};

/// A linear map with nonnegative coefficients from images to measurement bins.
///
/// Implementations validate shapes before any arithmetic and must be pure:
/// the same input always yields bit-identical output.
pub trait LinearOperator: Debug + Send + Sync {
    fn input_shape(&self) -> Shape;

    fn output_len(&self) -> usize;

    fn apply(&self, x: &Raster) -> Result<Measurement>;

    fn adjoint(&self, v: &Measurement) -> Result<Raster>;

    /// Number of slots along the axis used for ordered subsets (angles for a
    /// projector, output rows otherwise).
    fn subset_axis_len(&self) -> usize;

    /// Sub-operator holding every `count`-th slot starting at `index`,
    /// together with the positions of its outputs in the full output.
    fn restrict(&self, index: usize, count: usize) -> Result<(SharedOperator, Vec<usize>)>;
}

pub type SharedOperator = Arc<dyn LinearOperator>;

/// `Aᵀ1`. Fails if any pixel receives no weight.
pub fn sensitivity(op: &dyn LinearOperator) -> Result<Raster> {
    let s = op.adjoint(&Measurement::filled(op.output_len(), 1.0))?;
    if let Some(pixel) = s.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateOperator { pixel });
    }
    Ok(s)
}

/// Largest relative dot-product mismatch `|⟨Ax,v⟩ − ⟨x,Aᵀv⟩| / |⟨Ax,v⟩|` over
/// `trials` seeded random pairs with `x ≥ 0`.
pub fn adjoint_consistency(op: &dyn LinearOperator, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("adjoint_consistency needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = op.input_shape();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = Raster::new(shape.width, shape.height, (0..shape.len()).map(|_| rng.random::<f64>()).collect())?;
        let v = Measurement::new((0..op.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let lhs = dot(op.apply(&x)?.bins(), v.bins())?;
        let rhs = dot(x.values(), op.adjoint(&v)?.values())?;
        worst = worst.max((lhs - rhs).abs() / (lhs.abs() + f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// One ordered subset: its operator, the full-output positions it covers, and
/// its own sensitivity image.
#[derive(Debug, Clone)]
pub struct Subset {
    pub op: SharedOperator,
    pub output_indices: Vec<usize>,
    pub sensitivity: Raster,
}

/// Splits `op` into `count` interleaved subsets along its natural axis.
///
/// `count == 1` returns the operator itself. The subsets' outputs partition the
/// full output, so scattering them back reproduces `op.apply` exactly.
pub fn split_subsets(op: &SharedOperator, count: usize) -> Result<Vec<Subset>> {
    let axis = op.subset_axis_len();
    if count == 0 || !axis.is_multiple_of(count) {
        return Err(Error::Config(format!("{count} subsets do not divide a subset axis of length {axis}")));
    }
    if count == 1 {
        return Ok(vec![Subset {
            op: Arc::clone(op),
            output_indices: (0..op.output_len()).collect(),
            sensitivity: sensitivity(op.as_ref())?,
        }]);
    }
    (0..count)
        .map(|k| {
            let (sub, output_indices) = op.restrict(k, count)?;
            let sensitivity = sub.adjoint(&Measurement::filled(sub.output_len(), 1.0))?;
            Ok(Subset { op: sub, output_indices, sensitivity })
        })
        .collect()
}

fn interleaved(axis: usize, index: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || index >= count || !axis.is_multiple_of(count) {
        return Err(Error::Config(format!("subset {index} of {count} is invalid for axis length {axis}")));
    }
    Ok((index..axis).step_by(count).collect())
}

/// `A = Id`, optionally restricted to a set of image rows.
#[derive(Debug, Clone)]
pub struct Identity {
    shape: Shape,
    rows: Vec<usize>,
}

impl Identity {
    pub fn new(shape: Shape) -> Self {
        Identity { shape, rows: (0..shape.height).collect() }
    }
}

impl LinearOperator for Identity {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_len(&self) -> usize {
        self.rows.len() * self.shape.width
    }

    fn apply(&self, x: &Raster) -> Result<Measurement> {
        x.ensure_shape(self.shape, "identity input")?;
        let w = self.shape.width;
        let bins = self.rows.iter().flat_map(|&r| x.values()[r * w..(r + 1) * w].iter().copied()).collect();
        Ok(Measurement::from_vec(bins))
    }

    fn adjoint(&self, v: &Measurement) -> Result<Raster> {
        v.ensure_len(self.output_len(), "identity adjoint input")?;
        let w = self.shape.width;
        let mut out = Raster::zeros(self.shape);
        for (k, &r) in self.rows.iter().enumerate() {
            out.values_mut()[r * w..(r + 1) * w].copy_from_slice(&v.bins()[k * w..(k + 1) * w]);
        }
        Ok(out)
    }

    fn subset_axis_len(&self) -> usize {
        self.rows.len()
    }

    fn restrict(&self, index: usize, count: usize) -> Result<(SharedOperator, Vec<usize>)> {
        let picks = interleaved(self.rows.len(), index, count)?;
        let w = self.shape.width;
        let outputs = picks.iter().flat_map(|&k| k * w..(k + 1) * w).collect();
        let rows = picks.iter().map(|&k| self.rows[k]).collect();
        Ok((Arc::new(Identity { shape: self.shape, rows }), outputs))
    }
}

/// Small dense nonnegative matrix, row-major `rows × shape.len()`.
///
/// Meant for hand-checkable problems; shipped imaging operators never
/// materialize their matrix.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    shape: Shape,
    rows: usize,
    entries: Vec<f64>,
}

impl MatrixOperator {
    pub fn new(shape: Shape, rows: usize, entries: Vec<f64>) -> Result<Self> {
        crate::error::check_len("matrix entries", rows * shape.len(), entries.len())?;
        if rows == 0 {
            return Err(Error::Dimension("matrix needs at least one row".into()));
        }
        if let Some(k) = entries.iter().position(|&a| !(a >= 0.0)) {
            return Err(Error::Domain(format!("matrix entry {k} is negative")));
        }
        Ok(MatrixOperator { shape, rows, entries })
    }
}

impl LinearOperator for MatrixOperator {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_len(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &Raster) -> Result<Measurement> {
        x.ensure_shape(self.shape, "matrix input")?;
        let n = self.shape.len();
        let bins = (0..self.rows).map(|i| dot(&self.entries[i * n..(i + 1) * n], x.values())).collect::<Result<_>>()?;
        Ok(Measurement::from_vec(bins))
    }

    fn adjoint(&self, v: &Measurement) -> Result<Raster> {
        v.ensure_len(self.rows, "matrix adjoint input")?;
        let n = self.shape.len();
        let col: Vec<f64> = (0..n)
            .map(|j| {
                let mut acc = crate::par::CompensatedSum::default();
                for i in 0..self.rows {
                    acc.add(self.entries[i * n + j] * v.bins()[i]);
                }
                acc.value()
            })
            .collect();
        Ok(Raster::from_parts(self.shape, col))
    }

    fn subset_axis_len(&self) -> usize {
        self.rows
    }

    fn restrict(&self, index: usize, count: usize) -> Result<(SharedOperator, Vec<usize>)> {
        let picks = interleaved(self.rows, index, count)?;
        let n = self.shape.len();
        let entries = picks.iter().flat_map(|&i| self.entries[i * n..(i + 1) * n].iter().copied()).collect();
        Ok((Arc::new(MatrixOperator { shape: self.shape, rows: picks.len(), entries }), picks))
    }
}

/// `c·A` for a positive scalar `c`.
#[derive(Debug, Clone)]
pub struct Scaled {
    inner: SharedOperator,
    factor: f64,
}

impl Scaled {
    pub fn new(inner: SharedOperator, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("operator scale must be positive and finite, got {factor}")));
        }
        Ok(Scaled { inner, factor })
    }

    /// Rescales so the largest sensitivity entry becomes 1.
    pub fn normalized(inner: SharedOperator) -> Result<Self> {
        let s = sensitivity(inner.as_ref())?;
        let max = s.values().iter().fold(0.0f64, |m, &v| m.max(v));
        Self::new(inner, 1.0 / max)
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl LinearOperator for Scaled {
    fn input_shape(&self) -> Shape {
        self.inner.input_shape()
    }

    fn output_len(&self) -> usize {
        self.inner.output_len()
    }

    fn apply(&self, x: &Raster) -> Result<Measurement> {
        let mut m = self.inner.apply(x)?;
        m.bins_mut().iter_mut().for_each(|b| *b *= self.factor);
        Ok(m)
    }

    fn adjoint(&self, v: &Measurement) -> Result<Raster> {
        let mut r = self.inner.adjoint(v)?;
        r.values_mut().iter_mut().for_each(|b| *b *= self.factor);
        Ok(r)
    }

    fn subset_axis_len(&self) -> usize {
        self.inner.subset_axis_len()
    }

    fn restrict(&self, index: usize, count: usize) -> Result<(SharedOperator, Vec<usize>)> {
        let (sub, idx) = self.inner.restrict(index, count)?;
        Ok((Arc::new(Scaled { inner: sub, factor: self.factor }), idx))
    }
}
