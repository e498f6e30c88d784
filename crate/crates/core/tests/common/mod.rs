#![allow(dead_code)]

pub mod oracles;

use std::sync::Arc;

use pnpmm::objective::PoissonNll;
use pnpmm::operators::{Convolution, Identity, Kernel, Projector, ProjectorGeometry, SharedOperator};
use pnpmm::{Measurement, Raster, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_raster(shape: Shape, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Raster {
    let v = (0..shape.len()).map(|_| rng.random_range(lo..hi)).collect();
    Raster::new(shape.width, shape.height, v).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Identity,
    Blur5,
    Projector12,
}

pub const ALL_OPS: [OpKind; 3] = [OpKind::Identity, OpKind::Blur5, OpKind::Projector12];

pub fn operator(kind: OpKind, shape: Shape) -> SharedOperator {
    match kind {
        OpKind::Identity => Arc::new(Identity::new(shape)),
        OpKind::Blur5 => Arc::new(Convolution::new(Kernel::gaussian(5, 1.0).unwrap(), shape).unwrap()),
        OpKind::Projector12 => {
            Arc::new(Projector::new(ProjectorGeometry::for_image(shape, 12).unwrap(), shape).unwrap())
        }
    }
}

/// Noisy Poisson data for a random positive image.
pub fn random_problem(kind: OpKind, shape: Shape, background: f64, rng: &mut ChaCha8Rng) -> PoissonNll {
    let op = operator(kind, shape);
    let truth = random_raster(shape, 0.2, 3.0, rng);
    let mean = op.apply(&truth).unwrap();
    let y: Vec<f64> = mean.bins().iter().map(|&m| poisson_like(m + background, rng)).collect();
    PoissonNll::new(Measurement::new(y).unwrap(), op, background).unwrap()
}

/// Rounded Gaussian approximation of a Poisson draw; only the support matters
/// for these tests.
fn poisson_like(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.random_range(-1.0..1.0);
    (mean + z * mean.sqrt() * 1.7).round().max(0.0)
}
