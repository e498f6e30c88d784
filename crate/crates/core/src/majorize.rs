//! EM tangent majorant of the Poisson NLL.
//!
//! Around an anchor `x̃`, the majorant is separable:
//!
//! ```text
//! F(x, x̃) = Σ_j [ s_j·x_j − t_j·log x_j ] + C(x̃)
//! t = x̃ · Aᵀ( y / (A x̃ + b) )          s = Aᵀ1
//! C = m·b − Σ_i y_i·log p_i + Σ_j t_j·log x̃_j,   p = A x̃ + b
//! ```
//!
//! `C` is assembled from its definition rather than from `f(x̃)`, so the
//! tangency `F(x̃, x̃) = f(x̃)` is a checkable property. Minimizing `F` gives the
//! multiplicative MLEM step `t/s`; adding `‖x − u‖²/(2τ)` gives a per-pixel
//! quadratic whose nonnegative root is the proximal map.

use crate::error::{Error, Result};
use crate::objective::PoissonNll;
use crate::operators::sensitivity;
use crate::par;
use crate::raster::{Measurement, Raster};

/// Quantities of the majorant built around one anchor. Immutable once built.
#[derive(Debug, Clone)]
pub struct SurrogateContext {
    anchor: Raster,
    anchor_projection: Measurement,
    backprojected_ratio: Raster,
    em_numerator: Raster,
    sensitivity: Raster,
    constant: f64,
}

impl SurrogateContext {
    /// Builds the context, computing the sensitivity from the operator.
    pub fn build(nll: &PoissonNll, anchor: &Raster) -> Result<Self> {
        let s = sensitivity(nll.operator().as_ref())?;
        Self::build_with_sensitivity(nll, anchor, s)
    }

    /// Builds the context reusing a precomputed sensitivity image.
    pub fn build_with_sensitivity(nll: &PoissonNll, anchor: &Raster, sensitivity: Raster) -> Result<Self> {
        anchor.ensure_nonnegative("surrogate anchor")?;
        sensitivity.ensure_shape(anchor.shape(), "sensitivity")?;
        let op = nll.operator();
        let b = nll.background();
        let y = nll.data().bins();
        let mut proj = op.apply(anchor)?;
        proj.bins_mut().iter_mut().for_each(|p| *p += b);
        let p = proj.bins();
        if let Some(bin) = (0..y.len()).find(|&i| y[i] > 0.0 && !(p[i] > 0.0)) {
            return Err(Error::SingularAnchor { bin, count: y[bin] });
        }
        // Zero-count bins contribute nothing, whatever their projection.
        let ratio = Measurement::from_vec(par::map(y.len(), |i| if y[i] > 0.0 { y[i] / p[i] } else { 0.0 }));
        let back = op.adjoint(&ratio)?;
        let em_numerator = anchor.zip_map(&back, |a, r| a * r)?;

        let (t, xa) = (em_numerator.values(), anchor.values());
        let data_term = par::sum(y.len(), |i| if y[i] > 0.0 { y[i] * p[i].ln() } else { 0.0 });
        let anchor_term = par::sum(t.len(), |j| if t[j] > 0.0 { t[j] * xa[j].ln() } else { 0.0 });
        let constant = y.len() as f64 * b - data_term + anchor_term;

        Ok(SurrogateContext {
            anchor: anchor.clone(),
            anchor_projection: proj,
            backprojected_ratio: back,
            em_numerator,
            sensitivity,
            constant,
        })
    }

    pub fn anchor(&self) -> &Raster {
        &self.anchor
    }

    /// `A x̃ + b`.
    pub fn anchor_projection(&self) -> &Measurement {
        &self.anchor_projection
    }

    /// `Aᵀ(y / (A x̃ + b))`.
    pub fn backprojected_ratio(&self) -> &Raster {
        &self.backprojected_ratio
    }

    /// `t = x̃ · Aᵀ(y / (A x̃ + b))`.
    pub fn em_numerator(&self) -> &Raster {
        &self.em_numerator
    }

    pub fn sensitivity(&self) -> &Raster {
        &self.sensitivity
    }

    /// `f(x̃)` recovered from the projection already computed for the context.
    pub fn anchor_value(&self, nll: &PoissonNll) -> f64 {
        let y = nll.data().bins();
        let p = self.anchor_projection.bins();
        crate::objective::nll_from_projection(y, p, 0.0)
    }

    /// `F(x, x̃)`; `+∞` where `t_j > 0` and `x_j = 0`.
    pub fn eval(&self, x: &Raster) -> Result<f64> {
        x.ensure_shape(self.anchor.shape(), "surrogate argument")?;
        x.ensure_nonnegative("surrogate argument")?;
        let (s, t, v) = (self.sensitivity.values(), self.em_numerator.values(), x.values());
        let sum = par::sum(v.len(), |j| {
            if t[j] == 0.0 {
                s[j] * v[j]
            } else if v[j] > 0.0 {
                s[j] * v[j] - t[j] * v[j].ln()
            } else {
                f64::INFINITY
            }
        });
        Ok(sum + self.constant)
    }

    /// Exact minimizer `t/s`: one MLEM step from the anchor.
    pub fn argmin(&self) -> Result<Raster> {
        let s = self.sensitivity.values();
        if let Some(pixel) = s.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateOperator { pixel });
        }
        self.em_numerator.zip_map(&self.sensitivity, |t, s| t / s)
    }

    /// `argmin_{x ≥ 0} F(x, x̃) + ‖x − u‖²/(2τ)`, the nonnegative root of
    /// `x² + (τs − u)x − τt = 0` per pixel.
    pub fn prox(&self, u: &Raster, tau: f64) -> Result<Raster> {
        u.ensure_shape(self.anchor.shape(), "prox input")?;
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("prox step must be positive, got {tau}")));
        }
        let (s, t, uv) = (self.sensitivity.values(), self.em_numerator.values(), u.values());
        Ok(Raster::from_parts(u.shape(), par::map(uv.len(), |k| quadratic_root(uv[k] - tau * s[k], tau * t[k]))))
    }
}

/// Nonnegative root of `x² − a·x − c = 0` for `c ≥ 0`, i.e.
/// `½(a + √(a² + 4c))`, evaluated without cancellation.
#[inline]
pub fn quadratic_root(a: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return a.max(0.0);
    }
    let disc = a.mul_add(a, 4.0 * c).sqrt();
    if a >= 0.0 {
        0.5 * (a + disc)
    } else {
        2.0 * c / (disc - a)
    }
}

pub fn build_context(nll: &PoissonNll, anchor: &Raster) -> Result<SurrogateContext> {
    SurrogateContext::build(nll, anchor)
}

pub fn surrogate_eval(ctx: &SurrogateContext, x: &Raster) -> Result<f64> {
    ctx.eval(x)
}

pub fn surrogate_argmin(ctx: &SurrogateContext) -> Result<Raster> {
    ctx.argmin()
}

pub fn surrogate_prox(ctx: &SurrogateContext, u: &Raster, tau: f64) -> Result<Raster> {
    ctx.prox(u, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{Identity, MatrixOperator, SharedOperator};
    use crate::raster::Shape;
    use std::sync::Arc;

    fn matrix_nll(shape: Shape, rows: usize, a: Vec<f64>, y: Vec<f64>, b: f64) -> PoissonNll {
        let op: SharedOperator = Arc::new(MatrixOperator::new(shape, rows, a).unwrap());
        PoissonNll::new(Measurement::new(y).unwrap(), op, b).unwrap()
    }

    fn r(v: &[f64]) -> Raster {
        Raster::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn consistent_data_gives_anchor_times_sensitivity() {
        let a = vec![1.0, 2.0, 0.5, 0.3, 1.0, 1.0];
        let anchor = r(&[0.7, 1.3, 2.0]);
        let op = MatrixOperator::new(Shape::new(3, 1), 2, a.clone()).unwrap();
        use crate::operators::LinearOperator;
        let y = op.apply(&anchor).unwrap().into_bins();
        let nll = matrix_nll(Shape::new(3, 1), 2, a, y, 0.0);
        let ctx = build_context(&nll, &anchor).unwrap();
        for ((t, s), x) in ctx.em_numerator().values().iter().zip(ctx.sensitivity().values()).zip(anchor.values()) {
            assert!((t - x * s).abs() <= 1e-14 * t.abs());
        }
    }

    #[test]
    fn zero_data_gives_zero_numerator() {
        let nll = matrix_nll(Shape::new(2, 1), 1, vec![1.0, 1.0], vec![0.0], 0.0);
        let ctx = build_context(&nll, &r(&[1.0, 2.0])).unwrap();
        assert!(ctx.em_numerator().values().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn scalar_numerator() {
        let nll = matrix_nll(Shape::new(1, 1), 1, vec![1.0], vec![3.0], 0.0);
        let ctx = build_context(&nll, &r(&[2.0])).unwrap();
        assert_eq!(ctx.em_numerator().values(), &[3.0]);
    }

    #[test]
    fn singular_anchor_detected() {
        let nll = matrix_nll(Shape::new(2, 1), 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 1.0], 0.0);
        assert_eq!(build_context(&nll, &r(&[1.0, 0.0])).unwrap_err(), Error::SingularAnchor { bin: 1, count: 1.0 });
        // zero projection against a zero count is fine
        let nll = matrix_nll(Shape::new(2, 1), 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0], 0.0);
        assert!(build_context(&nll, &r(&[1.0, 0.0])).is_ok());
    }

    #[test]
    fn hand_evaluated_majorant() {
        let nll = matrix_nll(Shape::new(2, 1), 1, vec![1.0, 1.0], vec![2.0], 0.0);
        let ctx = build_context(&nll, &r(&[1.0, 1.0])).unwrap();
        let x = r(&[1.0, 3.0]);
        let big_f = ctx.eval(&x).unwrap();
        let f = nll.eval(&x).unwrap();
        // F = 4 − log 3 − 2 log 2,  f = 4 − 2 log 4
        assert!((big_f - (4.0 - 3f64.ln() - 2.0 * 2f64.ln())).abs() < 1e-12);
        assert!((f - (4.0 - 2.0 * 4f64.ln())).abs() < 1e-12);
        assert!((big_f - 1.5151).abs() < 1e-4 && (f - 1.2274).abs() < 1e-4);
        assert!(big_f >= f);
    }

    #[test]
    fn tangency_with_background() {
        let nll = matrix_nll(Shape::new(2, 1), 3, vec![1.0, 0.2, 0.0, 1.0, 0.5, 0.5], vec![3.0, 0.0, 1.0], 0.25);
        let anchor = r(&[0.8, 1.7]);
        let ctx = build_context(&nll, &anchor).unwrap();
        let f = nll.eval(&anchor).unwrap();
        assert!((ctx.eval(&anchor).unwrap() - f).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn surrogate_is_infinite_at_zero_with_positive_numerator() {
        let nll = matrix_nll(Shape::new(1, 1), 1, vec![1.0], vec![3.0], 0.0);
        let ctx = build_context(&nll, &r(&[2.0])).unwrap();
        assert_eq!(ctx.eval(&r(&[0.0])).unwrap(), f64::INFINITY);
        assert!(ctx.eval(&r(&[-1.0])).is_err());
    }

    #[test]
    fn identity_argmin_lands_on_data() {
        let shape = Shape::new(3, 2);
        let y = vec![0.0, 1.0, 4.0, 2.5, 7.0, 0.5];
        let nll = PoissonNll::new(Measurement::new(y.clone()).unwrap(), Arc::new(Identity::new(shape)), 0.0).unwrap();
        let ctx = build_context(&nll, &Raster::ones(shape)).unwrap();
        assert_eq!(ctx.argmin().unwrap().values(), &y[..]);
    }

    #[test]
    fn hand_mlem_step_descends() {
        let nll = matrix_nll(Shape::new(2, 1), 1, vec![1.0, 1.0], vec![8.0], 0.0);
        let anchor = r(&[1.0, 3.0]);
        let ctx = build_context(&nll, &anchor).unwrap();
        let next = ctx.argmin().unwrap();
        assert_eq!(next.values(), &[2.0, 6.0]);
        assert!(nll.eval(&next).unwrap() < nll.eval(&anchor).unwrap());
    }

    #[test]
    fn scalar_prox_closed_form() {
        let nll = matrix_nll(Shape::new(1, 1), 1, vec![1.0], vec![3.0], 0.0);
        let ctx = build_context(&nll, &r(&[2.0])).unwrap();
        let x = ctx.prox(&r(&[2.0]), 1.0).unwrap().values()[0];
        assert!((x - (1.0 + 13f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((x - 2.302776).abs() < 1e-6);
    }

    #[test]
    fn prox_with_zero_numerator_is_shifted_clamp() {
        let nll = matrix_nll(Shape::new(3, 1), 1, vec![1.0, 2.0, 0.5], vec![0.0], 0.0);
        let ctx = build_context(&nll, &r(&[1.0, 1.0, 1.0])).unwrap();
        let u = r(&[3.0, 0.5, -2.0]);
        let x = ctx.prox(&u, 0.5).unwrap();
        assert_eq!(x.values(), &[2.5, 0.0, 0.0]);
    }

    #[test]
    fn prox_tends_to_input_for_small_steps() {
        let nll = matrix_nll(Shape::new(2, 1), 1, vec![1.0, 1.0], vec![5.0], 0.0);
        let ctx = build_context(&nll, &r(&[1.0, 2.0])).unwrap();
        let u = r(&[0.3, 4.0]);
        let x = ctx.prox(&u, 1e-10).unwrap();
        for (a, b) in x.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(ctx.prox(&u, 0.0).is_err());
    }

    #[test]
    fn quadratic_root_is_stable_for_tiny_constant() {
        // a < 0, c tiny: naive ½(a + √(a² + 4c)) cancels to zero.
        let x = quadratic_root(-1e8, 1e-9);
        assert!((x - 1e-17).abs() < 1e-30);
        assert!(x > 0.0);
        assert_eq!(quadratic_root(0.0, 0.0), 0.0);
        assert_eq!(quadratic_root(2.0, 0.0), 2.0);
    }
}
