//! Piecewise-constant test images. Coordinates are normalized to `[-1, 1]`
//! across the image, `x` to the right and `y` downwards.

use crate::raster::{Raster, Shape};

/// Filled ellipse with an additive intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Rotation in radians, counter-clockwise.
    pub angle: f64,
    pub value: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.angle.sin_cos();
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        let u = (dx * cos + dy * sin) / self.semi_x;
        let v = (-dx * sin + dy * cos) / self.semi_y;
        u * u + v * v <= 1.0
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in normalized coordinates,
/// overwriting what lies below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub value: f64,
}

fn pixel_center(shape: Shape, row: usize, col: usize) -> (f64, f64) {
    let x = 2.0 * (col as f64 + 0.5) / shape.width as f64 - 1.0;
    let y = 2.0 * (row as f64 + 0.5) / shape.height as f64 - 1.0;
    (x, y)
}

fn render<F: Fn(f64, f64) -> f64>(shape: Shape, f: F) -> Raster {
    let values = (0..shape.len())
        .map(|k| {
            let (x, y) = pixel_center(shape, k / shape.width, k % shape.width);
            f(x, y)
        })
        .collect();
    Raster::from_parts(shape, values)
}

/// Sums the ellipses sampled at pixel centers, clamped at zero.
pub fn render_ellipses(shape: Shape, ellipses: &[Ellipse]) -> Raster {
    render(shape, |x, y| ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum::<f64>().max(0.0))
}

/// Paints blocks in order over a constant background.
pub fn render_blocks(shape: Shape, background: f64, blocks: &[Block]) -> Raster {
    render(shape, |x, y| {
        blocks.iter().rev().find(|b| x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1).map_or(background, |b| b.value)
    })
}

/// Modified Shepp-Logan head with contrast raised for visibility, peak 1.
pub fn shepp_logan(shape: Shape) -> Raster {
    let deg = std::f64::consts::PI / 180.0;
    let e = |cx, cy, a, b, angle: f64, value| Ellipse {
        center_x: cx,
        center_y: cy,
        semi_x: a,
        semi_y: b,
        angle: angle * deg,
        value,
    };
    render_ellipses(
        shape,
        &[
            e(0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
            e(0.0, 0.0184, 0.6624, 0.874, 0.0, -0.8),
            e(0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
            e(-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
            e(0.0, -0.35, 0.21, 0.25, 0.0, 0.1),
            e(0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
            e(0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
            e(-0.08, 0.605, 0.046, 0.023, 0.0, 0.1),
            e(0.0, 0.606, 0.023, 0.023, 0.0, 0.1),
            e(0.06, 0.605, 0.023, 0.046, 0.0, 0.1),
        ],
    )
}

/// Blocks and discs on a dim background; intensities in `[0.1, 1]`.
pub fn blocks_and_discs(shape: Shape) -> Raster {
    let base = render_blocks(
        shape,
        0.1,
        &[
            Block { x0: -0.8, y0: -0.8, x1: -0.1, y1: -0.2, value: 0.6 },
            Block { x0: 0.1, y0: -0.7, x1: 0.7, y1: 0.7, value: 0.35 },
            Block { x0: -0.7, y0: 0.2, x1: -0.2, y1: 0.75, value: 0.8 },
        ],
    );
    let discs = [(0.4, 0.0, 0.18, 1.0), (0.4, -0.45, 0.1, 0.9), (-0.45, -0.5, 0.12, 0.2), (-0.45, 0.47, 0.12, 0.3)];
    let shape = base.shape();
    let mut values = base.into_values();
    for (k, v) in values.iter_mut().enumerate() {
        let (x, y) = pixel_center(shape, k / shape.width, k % shape.width);
        for &(cx, cy, r, value) in &discs {
            if (x - cx).powi(2) + (y - cy).powi(2) <= r * r {
                *v = value;
            }
        }
    }
    Raster::from_parts(shape, values)
}

/// A second layout with the same intensity range, for parameter tuning away
/// from the evaluation image.
pub fn validation_phantom(shape: Shape) -> Raster {
    let base = render_blocks(
        shape,
        0.15,
        &[
            Block { x0: -0.75, y0: -0.3, x1: 0.75, y1: 0.3, value: 0.5 },
            Block { x0: -0.2, y0: -0.85, x1: 0.3, y1: 0.85, value: 0.7 },
        ],
    );
    let ring = [Ellipse { center_x: -0.5, center_y: 0.6, semi_x: 0.25, semi_y: 0.2, angle: 0.4, value: 0.8 }];
    let overlay = render_ellipses(shape, &ring);
    base.zip_map(&overlay, |b, o| if o > 0.0 { o + 0.2 } else { b }).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantoms_are_piecewise_constant_and_bounded() {
        let shape = Shape::new(64, 64);
        for img in [shepp_logan(shape), blocks_and_discs(shape), validation_phantom(shape)] {
            assert!(img.values().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
            let mut levels: Vec<f64> = img.values().to_vec();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            assert!(levels.len() >= 3 && levels.len() <= 12, "{} levels", levels.len());
        }
    }

    #[test]
    fn ellipse_membership() {
        let e = Ellipse { center_x: 0.0, center_y: 0.0, semi_x: 0.5, semi_y: 0.25, angle: 0.0, value: 1.0 };
        assert!(e.contains(0.49, 0.0) && !e.contains(0.0, 0.3));
        let r = Ellipse { angle: std::f64::consts::FRAC_PI_2, ..e };
        assert!(r.contains(0.0, 0.49) && !r.contains(0.3, 0.0));
    }

    #[test]
    fn pixel_grid_is_centered() {
        assert_eq!(pixel_center(Shape::new(2, 2), 0, 0), (-0.5, -0.5));
        assert_eq!(pixel_center(Shape::new(2, 2), 1, 1), (0.5, 0.5));
    }
}
