use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gn::gauss_newton;
use super::{CurveSamples, QuadGrid, StateCurve};
use crate::dynsys::{DynamicalSystem, ForcingSpec};
use crate::linalg::weighted_least_squares;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::splines::SplineFunction;
use crate::{Error, Result};

const MULTISTARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    ClosedForm,
    GaussNewton,
    SecondOrderRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMatchFit {
    pub theta: Vec<f64>,
    /// Trapezoid approximation of `∫‖dx̂/dt − f(x̂; t, θ̂)‖² dt`.
    pub objective: f64,
    pub quad_points: usize,
    pub quad_span: (f64, f64),
    pub method: MatchMethod,
    pub converged: bool,
    pub iterations: usize,
}

/// Parameters estimated by gradient matching (the replacement target, if
/// any, stays at its nominal value).
fn free_params(system: &DynamicalSystem) -> (Vec<usize>, Vec<f64>) {
    let mut base = vec![0.0; system.param_dim()];
    let mut free = Vec::new();
    for k in 0..system.param_dim() {
        match system.forcing {
            ForcingSpec::ParameterReplacement { param, nominal } if param == k => base[k] = nominal,
            _ => free.push(k),
        }
    }
    (free, base)
}

fn check_dims(curve: &dyn StateCurve, system: &DynamicalSystem) -> Result<()> {
    if curve.dim() != system.dim {
        return Err(Error::invalid(format!(
            "smooth has {} coordinates but model {} has dimension {}",
            curve.dim(),
            system.name,
            system.dim
        )));
    }
    Ok(())
}

pub(crate) fn objective(s: &CurveSamples, system: &DynamicalSystem, theta: &[f64]) -> f64 {
    let mut f = vec![0.0; s.dim];
    let mut total = 0.0;
    for q in 0..s.len() {
        system.rate(s.state(q), s.t[q], theta, &mut f);
        let e: f64 = s
            .deriv(q)
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += s.w[q] * e;
    }
    total
}

/// Estimates θ by matching the model rate to the smooth's derivative.
///
/// Linear-in-θ systems are solved in closed form and ignore `theta_init`.
/// Otherwise Gauss–Newton runs from `theta_init`, or from the best of a
/// fixed-seed random multistart when none is given.
pub fn gradient_match(
    curve: &dyn StateCurve,
    system: &DynamicalSystem,
    quad: &QuadGrid,
    theta_init: Option<&[f64]>,
) -> Result<GradientMatchFit> {
    check_dims(curve, system)?;
    let s = CurveSamples::new(curve, quad)?;
    if system.linear_in_params {
        return closed_form(&s, system, quad);
    }
    let starts: Vec<Vec<f64>> = match theta_init {
        Some(th) => vec![th.to_vec()],
        None => random_starts(system),
    };
    gn_multistart(&s, system, quad, &starts)
}

/// Gauss–Newton gradient matching from each start, keeping the lowest
/// objective. Exposed so linear systems can be cross-checked against the
/// closed form.
pub fn gradient_match_gauss_newton(
    curve: &dyn StateCurve,
    system: &DynamicalSystem,
    quad: &QuadGrid,
    starts: &[Vec<f64>],
) -> Result<GradientMatchFit> {
    check_dims(curve, system)?;
    let s = CurveSamples::new(curve, quad)?;
    gn_multistart(&s, system, quad, starts)
}

fn random_starts(system: &DynamicalSystem) -> Vec<Vec<f64>> {
    let (free, base) = free_params(system);
    let mut rng = rng_from_seed(derive_seed(0, &[stream::MULTISTART]));
    (0..MULTISTARTS)
        .map(|_| {
            let mut th = base.clone();
            for &k in &free {
                th[k] = 10f64.powf(rng.random_range(-1.0..1.0));
            }
            th
        })
        .collect()
}

fn closed_form(
    s: &CurveSamples,
    system: &DynamicalSystem,
    quad: &QuadGrid,
) -> Result<GradientMatchFit> {
    let d = s.dim;
    let (free, base) = free_params(system);
    let p = free.len();
    let n = s.len();
    let mut x = DMatrix::<f64>::zeros(n * d, p);
    let mut y = DVector::<f64>::zeros(n * d);
    let mut w = vec![0.0; n * d];
    let mut f0 = vec![0.0; d];
    let mut fk = vec![0.0; d];
    let mut th = base.clone();
    for q in 0..n {
        let (xs, t) = (s.state(q), s.t[q]);
        system.rate(xs, t, &base, &mut f0);
        for (c, &k) in free.iter().enumerate() {
            th[k] = 1.0;
            system.rate(xs, t, &th, &mut fk);
            th[k] = 0.0;
            for i in 0..d {
                x[(q * d + i, c)] = fk[i] - f0[i];
            }
        }
        for i in 0..d {
            y[q * d + i] = s.deriv(q)[i] - f0[i];
            w[q * d + i] = s.w[q];
        }
    }
    let beta = weighted_least_squares(
        &x,
        &w,
        &y,
        0.0,
        "gradient matching",
        "parameters are not identifiable from this trajectory",
    )?;
    let mut theta = base;
    for (c, &k) in free.iter().enumerate() {
        theta[k] = beta[c];
    }
    Ok(GradientMatchFit {
        objective: objective(s, system, &theta),
        theta,
        quad_points: quad.len(),
        quad_span: (quad.points[0], quad.points[quad.len() - 1]),
        method: MatchMethod::ClosedForm,
        converged: true,
        iterations: 0,
    })
}

fn gn_multistart(
    s: &CurveSamples,
    system: &DynamicalSystem,
    quad: &QuadGrid,
    starts: &[Vec<f64>],
) -> Result<GradientMatchFit> {
    if starts.is_empty() {
        return Err(Error::invalid("no Gauss-Newton starting values"));
    }
    let mut best: Option<GradientMatchFit> = None;
    let mut first_err = None;
    for start in starts {
        if start.len() != system.param_dim() {
            return Err(Error::invalid(format!(
                "starting θ has {} entries, model {} has {} parameters",
                start.len(),
                system.name,
                system.param_dim()
            )));
        }
        match gn_single(s, system, quad, start) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap())
}

fn gn_single(
    s: &CurveSamples,
    system: &DynamicalSystem,
    quad: &QuadGrid,
    start: &[f64],
) -> Result<GradientMatchFit> {
    let d = s.dim;
    let (free, _) = free_params(system);
    let n = s.len();
    let sqrt_w: Vec<f64> = s.w.iter().map(|w| w.sqrt()).collect();
    let full = |p: &[f64]| {
        let mut th = start.to_vec();
        for (c, &k) in free.iter().enumerate() {
            th[k] = p[c];
        }
        th
    };
    let resid = |th: &[f64], r: &mut [f64]| {
        let mut f = vec![0.0; d];
        for q in 0..n {
            system.rate(s.state(q), s.t[q], th, &mut f);
            for i in 0..d {
                r[q * d + i] = sqrt_w[q] * (s.deriv(q)[i] - f[i]);
            }
        }
    };
    let p0: Vec<f64> = free.iter().map(|&k| start[k]).collect();
    let out = gauss_newton(
        |p, r| resid(&full(p), r),
        |p, _, j| {
            let mut rp = vec![0.0; n * d];
            let mut rm = vec![0.0; n * d];
            for c in 0..p.len() {
                let h = 1e-6 * p[c].abs().max(1.0);
                let mut th = full(p);
                let k = free[c];
                th[k] = p[c] + h;
                resid(&th, &mut rp);
                th[k] = p[c] - h;
                resid(&th, &mut rm);
                for r in 0..n * d {
                    j[(r, c)] = (rp[r] - rm[r]) / (2.0 * h);
                }
            }
        },
        &p0,
        n * d,
        0.0,
        "gradient matching",
    )?;
    Ok(GradientMatchFit {
        theta: full(&out.params),
        objective: out.objective,
        quad_points: quad.len(),
        quad_span: (quad.points[0], quad.points[quad.len() - 1]),
        method: MatchMethod::GaussNewton,
        converged: true,
        iterations: out.iterations,
    })
}

/// Second-order gradient matching for a scalar smooth:
/// `x̂'' ≈ a + b x̂' + c x̂ + d x̂² + e x̂ x̂'²`, solved by weighted linear
/// regression on the quadrature grid. Returns `θ = (a, b, c, d, e)`.
pub fn gradient_match_order2(xhat: &SplineFunction, quad: &QuadGrid) -> Result<GradientMatchFit> {
    if xhat.outputs() != 1 {
        return Err(Error::invalid(
            "second-order matching needs a scalar smooth",
        ));
    }
    if xhat.basis().order() < 4 {
        return Err(Error::invalid(
            "second-order matching needs a cubic or higher basis",
        ));
    }
    let (a, b) = xhat.domain();
    let tol = 1e-9 * (b - a).abs().max(1.0);
    if quad.points[0] < a - tol || quad.points[quad.len() - 1] > b + tol {
        return Err(Error::invalid(
            "quadrature grid extends beyond the smooth's domain",
        ));
    }
    let n = quad.len();
    let mut x = DMatrix::<f64>::zeros(n, 5);
    let mut y = DVector::<f64>::zeros(n);
    let mut v = [0.0];
    for (q, &t) in quad.points.iter().enumerate() {
        xhat.eval_into(t, 0, &mut v);
        let s = v[0];
        xhat.eval_into(t, 1, &mut v);
        let ds = v[0];
        xhat.eval_into(t, 2, &mut v);
        y[q] = v[0];
        let row = order2_regressors(s, ds);
        for c in 0..5 {
            x[(q, c)] = row[c];
        }
    }
    let beta = weighted_least_squares(
        &x,
        &quad.weights,
        &y,
        0.0,
        "second-order gradient matching",
        "regressors are collinear on this smooth",
    )?;
    let resid = &y - &x * &beta;
    let objective = (0..n).map(|q| quad.weights[q] * resid[q] * resid[q]).sum();
    Ok(GradientMatchFit {
        theta: beta.iter().copied().collect(),
        objective,
        quad_points: n,
        quad_span: (quad.points[0], quad.points[n - 1]),
        method: MatchMethod::SecondOrderRegression,
        converged: true,
        iterations: 0,
    })
}

#[inline]
fn order2_regressors(x: f64, dx: f64) -> [f64; 5] {
    [1.0, dx, x, x * x, x * dx * dx]
}
