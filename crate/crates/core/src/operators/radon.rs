use std::f64::consts::PI;
use std::sync::Arc;

use super::{interleaved, LinearOperator, SharedOperator};
use crate::error::{Error, Result};
use crate::par;
use crate::raster::{Measurement, Raster, Shape};

/// Parallel-beam acquisition geometry.
///
/// Detector coordinate of a point `(u, v)` (pixel units, origin at the image
/// center, `v` pointing down the rows) at angle `θ` is `t = u·sin θ + v·cos θ`,
/// so angle 0 integrates along image rows. Bin `b` is centered at
/// `(b + ½ − bins/2)·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorGeometry {
    angles: Vec<f64>,
    num_detector_bins: usize,
    detector_spacing: f64,
}

impl ProjectorGeometry {
    /// `num_angles` equally spaced angles `k·π/num_angles`.
    pub fn uniform(num_angles: usize, num_detector_bins: usize, detector_spacing: f64) -> Result<Self> {
        if num_angles == 0 {
            return Err(Error::Config("projector needs at least one angle".into()));
        }
        let angles = (0..num_angles).map(|k| k as f64 * PI / num_angles as f64).collect();
        Self::with_angles(angles, num_detector_bins, detector_spacing)
    }

    /// Uniform angles with unit spacing and enough bins to catch every pixel
    /// of `shape` at every angle.
    pub fn for_image(shape: Shape, num_angles: usize) -> Result<Self> {
        let diag = ((shape.width * shape.width + shape.height * shape.height) as f64).sqrt();
        Self::uniform(num_angles, diag.ceil() as usize + 2, 1.0)
    }

    pub fn with_angles(angles: Vec<f64>, num_detector_bins: usize, detector_spacing: f64) -> Result<Self> {
        if angles.is_empty() || num_detector_bins == 0 {
            return Err(Error::Config("projector needs at least one angle and one bin".into()));
        }
        if !(detector_spacing > 0.0 && detector_spacing.is_finite()) {
            return Err(Error::Config(format!("detector spacing must be positive, got {detector_spacing}")));
        }
        if angles.iter().any(|a| !(0.0..PI).contains(a)) || angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("angles must be strictly increasing within [0, π)".into()));
        }
        Ok(ProjectorGeometry { angles, num_detector_bins, detector_spacing })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_detector_bins(&self) -> usize {
        self.num_detector_bins
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    fn check_image(&self, shape: Shape) -> Result<()> {
        let diag = ((shape.width * shape.width + shape.height * shape.height) as f64).sqrt();
        if (self.num_detector_bins as f64) < diag / self.detector_spacing {
            return Err(Error::Dimension(format!(
                "{} detector bins cannot cover an image diagonal of {diag:.2} at spacing {}",
                self.num_detector_bins, self.detector_spacing
            )));
        }
        Ok(())
    }
}

/// Pixel-driven parallel-beam projector with linear detector interpolation.
#[derive(Debug, Clone)]
pub struct Projector {
    geometry: Arc<ProjectorGeometry>,
    shape: Shape,
    // (sin, cos) per angle
    trig: Vec<(f64, f64)>,
}

impl Projector {
    pub fn new(geometry: ProjectorGeometry, shape: Shape) -> Result<Self> {
        geometry.check_image(shape)?;
        let trig = geometry.angles.iter().map(|a| a.sin_cos()).collect();
        Ok(Projector { geometry: Arc::new(geometry), shape, trig })
    }

    pub fn geometry(&self) -> &ProjectorGeometry {
        &self.geometry
    }

    /// Bin and weights receiving pixel `(row, col)` at the angle with the given
    /// trig pair. The two weights always sum to one; out-of-range bins are
    /// dropped by the caller.
    #[inline]
    fn footprint(&self, row: usize, col: usize, (sin, cos): (f64, f64)) -> (isize, f64, f64) {
        let u = col as f64 + 0.5 - 0.5 * self.shape.width as f64;
        let v = row as f64 + 0.5 - 0.5 * self.shape.height as f64;
        let t = u * sin + v * cos;
        let nb = self.geometry.num_detector_bins as f64;
        let pos = t / self.geometry.detector_spacing + 0.5 * nb - 0.5;
        let b0 = pos.floor();
        let frac = pos - b0;
        (b0 as isize, 1.0 - frac, frac)
    }
}

impl LinearOperator for Projector {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_len(&self) -> usize {
        self.trig.len() * self.geometry.num_detector_bins
    }

    fn apply(&self, x: &Raster) -> Result<Measurement> {
        x.ensure_shape(self.shape, "projector input")?;
        let nb = self.geometry.num_detector_bins;
        let w = self.shape.width;
        let src = x.values();
        let mut out = vec![0.0; self.output_len()];
        par::for_each_row(&mut out, nb, |a, det| {
            let trig = self.trig[a];
            for (k, &val) in src.iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let (b0, w0, w1) = self.footprint(k / w, k % w, trig);
                if b0 >= 0 && (b0 as usize) < nb {
                    det[b0 as usize] += w0 * val;
                }
                let b1 = b0 + 1;
                if b1 >= 0 && (b1 as usize) < nb {
                    det[b1 as usize] += w1 * val;
                }
            }
        });
        Ok(Measurement::from_vec(out))
    }

    fn adjoint(&self, v: &Measurement) -> Result<Raster> {
        v.ensure_len(self.output_len(), "projector adjoint input")?;
        let nb = self.geometry.num_detector_bins;
        let w = self.shape.width;
        let bins = v.bins();
        let mut out = vec![0.0; self.shape.len()];
        par::for_each_row(&mut out, w, |r, row| {
            for (c, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (a, &trig) in self.trig.iter().enumerate() {
                    let det = &bins[a * nb..(a + 1) * nb];
                    let (b0, w0, w1) = self.footprint(r, c, trig);
                    if b0 >= 0 && (b0 as usize) < nb {
                        acc += w0 * det[b0 as usize];
                    }
                    let b1 = b0 + 1;
                    if b1 >= 0 && (b1 as usize) < nb {
                        acc += w1 * det[b1 as usize];
                    }
                }
                *o = acc;
            }
        });
        Ok(Raster::from_parts(self.shape, out))
    }

    fn subset_axis_len(&self) -> usize {
        self.trig.len()
    }

    fn restrict(&self, index: usize, count: usize) -> Result<(SharedOperator, Vec<usize>)> {
        let picks = interleaved(self.trig.len(), index, count)?;
        let nb = self.geometry.num_detector_bins;
        let geometry = ProjectorGeometry {
            angles: picks.iter().map(|&a| self.geometry.angles[a]).collect(),
            num_detector_bins: nb,
            detector_spacing: self.geometry.detector_spacing,
        };
        let trig = picks.iter().map(|&a| self.trig[a]).collect();
        let outputs = picks.iter().flat_map(|&a| a * nb..(a + 1) * nb).collect();
        Ok((Arc::new(Projector { geometry: Arc::new(geometry), shape: self.shape, trig }), outputs))
    }
}
