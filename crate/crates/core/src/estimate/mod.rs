//! Gradient matching and empirical forcing-function estimation.
//!
//! Both stages work from a smooth estimate of the state: parameters are
//! chosen to make the model rate match the smooth's derivative, and the
//! forcing coefficients are fitted afterwards with the parameters held fixed.

mod forcing;
mod gn;
mod gradient;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::splines::SplineFunction;
use crate::{Error, Result};

pub use forcing::{
    estimate_additive_with, estimate_forcing, estimate_forcing_gauss_newton, AdditiveForcingDesign,
    ForcingEstimate,
};
pub use gradient::{
    gradient_match, gradient_match_gauss_newton, gradient_match_order2, GradientMatchFit,
    MatchMethod,
};

/// A smooth state estimate with its time derivative.
pub trait StateCurve {
    fn dim(&self) -> usize;
    fn domain(&self) -> (f64, f64);
    fn state(&self, t: f64, out: &mut [f64]);
    fn derivative(&self, t: f64, out: &mut [f64]);
}

/// `x̂(t)` and `dx̂/dt` from a vector-valued spline.
#[derive(Debug, Clone, Copy)]
pub struct FirstOrder<'a>(pub &'a SplineFunction);

impl StateCurve for FirstOrder<'_> {
    fn dim(&self) -> usize {
        self.0.outputs()
    }
    fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        self.0.eval_into(t, 0, out)
    }
    fn derivative(&self, t: f64, out: &mut [f64]) {
        self.0.eval_into(t, 1, out)
    }
}

/// A scalar spline lifted to the state `(x̂, dx̂/dt)` with derivative
/// `(dx̂/dt, d²x̂/dt²)`, for second-order models.
#[derive(Debug, Clone, Copy)]
pub struct SecondOrder<'a>(pub &'a SplineFunction);

impl StateCurve for SecondOrder<'_> {
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        let mut v = [0.0];
        self.0.eval_into(t, 0, &mut v);
        out[0] = v[0];
        self.0.eval_into(t, 1, &mut v);
        out[1] = v[0];
    }
    fn derivative(&self, t: f64, out: &mut [f64]) {
        let mut v = [0.0];
        self.0.eval_into(t, 1, &mut v);
        out[0] = v[0];
        self.0.eval_into(t, 2, &mut v);
        out[1] = v[0];
    }
}

/// Trapezoid-rule nodes and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadGrid {
    pub fn trapezoid(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "quadrature grid needs >= 2 strictly increasing points",
            ));
        }
        let n = points.len();
        let mut weights = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (points[i + 1] - points[i]);
            weights[i] += h;
            weights[i + 1] += h;
        }
        Ok(Self { points, weights })
    }

    /// Splits every interval between consecutive `times` into `per_interval`
    /// equal pieces.
    pub fn refine(times: &[f64], per_interval: usize) -> Result<Self> {
        if per_interval == 0 || times.len() < 2 {
            return Err(Error::invalid(
                "need >= 2 times and >= 1 point per interval",
            ));
        }
        let mut pts = Vec::with_capacity((times.len() - 1) * per_interval + 1);
        for w in times.windows(2) {
            for k in 0..per_interval {
                pts.push(w[0] + (w[1] - w[0]) * k as f64 / per_interval as f64);
            }
        }
        pts.push(times[times.len() - 1]);
        Self::trapezoid(pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A state curve evaluated on a quadrature grid.
#[derive(Debug, Clone)]
pub(crate) struct CurveSamples {
    pub dim: usize,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
}

impl CurveSamples {
    pub fn new(curve: &dyn StateCurve, quad: &QuadGrid) -> Result<Self> {
        let (a, b) = curve.domain();
        let tol = 1e-9 * (b - a).abs().max(1.0);
        if quad.points[0] < a - tol || quad.points[quad.len() - 1] > b + tol {
            return Err(Error::invalid(
                "quadrature grid extends beyond the smooth's domain",
            ));
        }
        let d = curve.dim();
        let n = quad.len();
        let mut x = vec![0.0; n * d];
        let mut dx = vec![0.0; n * d];
        for (q, &t) in quad.points.iter().enumerate() {
            curve.state(t, &mut x[q * d..(q + 1) * d]);
            curve.derivative(t, &mut dx[q * d..(q + 1) * d]);
        }
        Ok(Self {
            dim: d,
            t: quad.points.clone(),
            w: quad.weights.clone(),
            x,
            dx,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn state(&self, q: usize) -> &[f64] {
        &self.x[q * self.dim..(q + 1) * self.dim]
    }

    pub fn deriv(&self, q: usize) -> &[f64] {
        &self.dx[q * self.dim..(q + 1) * self.dim]
    }
}
