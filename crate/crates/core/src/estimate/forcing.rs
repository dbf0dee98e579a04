use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::gn::gauss_newton;
use super::gradient::objective;
use super::{CurveSamples, QuadGrid, StateCurve};
use crate::dynsys::{DynamicalSystem, ForcingSpec};
use crate::linalg::cholesky_with;
use crate::splines::{BSplineBasis, SplineFunction};
use crate::{Error, Result};

const RANK_CONTEXT: &str = "forcing estimation";
const RANK_HINT: &str = "the forcing basis is too rich for the quadrature grid; use wider knot spacing or a ridge penalty";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingEstimate {
    /// `ĝ(t) = Ψ(t) D`.
    pub g: SplineFunction,
    pub injection: ForcingSpec,
    pub theta: Vec<f64>,
    pub lambda_g: f64,
    /// Gradient-matching objective with `ĝ` injected.
    pub objective: f64,
    /// The same objective without forcing (additive `g ≡ 0`, or the
    /// replacement parameter at its nominal value).
    pub objective_unforced: f64,
    /// `dx̂/dt − f(x̂; θ̂, ĝ)` on the quadrature grid, row-major.
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// Sparse rows of `Ψ` at the quadrature points, with the factorised normal
/// matrix for additive forcing. Reusable across data sets that share the
/// quadrature grid (bootstrap refits).
#[derive(Debug, Clone)]
pub struct AdditiveForcingDesign {
    basis: BSplineBasis,
    lambda: f64,
    weights: Vec<f64>,
    first: Vec<usize>,
    values: Vec<[f64; 8]>,
    chol: Cholesky<f64, Dyn>,
}

impl AdditiveForcingDesign {
    pub fn new(basis: &BSplineBasis, quad: &QuadGrid, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("forcing penalty must be finite and >= 0"));
        }
        let (a, b) = basis.domain();
        let tol = 1e-9 * (b - a).abs().max(1.0);
        if quad.points[0] < a - tol || quad.points[quad.len() - 1] > b + tol {
            return Err(Error::invalid(
                "quadrature grid extends beyond the forcing basis domain",
            ));
        }
        let k = basis.len();
        let order = basis.order();
        let mut first = Vec::with_capacity(quad.len());
        let mut values = Vec::with_capacity(quad.len());
        let mut normal = DMatrix::<f64>::zeros(k, k);
        for (q, &t) in quad.points.iter().enumerate() {
            let nz = basis.eval_nonzero(t, 0);
            let w = quad.weights[q];
            for i in 0..order {
                for j in 0..order {
                    normal[(nz.first + i, nz.first + j)] += w * nz.values[0][i] * nz.values[0][j];
                }
            }
            first.push(nz.first);
            values.push(nz.values[0]);
        }
        for i in 0..k {
            normal[(i, i)] += lambda;
        }
        let chol = cholesky_with(normal, RANK_CONTEXT, RANK_HINT, lambda == 0.0)?;
        Ok(Self {
            basis: basis.clone(),
            lambda,
            weights: quad.weights.clone(),
            first,
            values,
            chol,
        })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Penalised least-squares coefficients for a residual signal sampled
    /// on the quadrature grid.
    pub fn fit(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.first.len() {
            return Err(Error::invalid(
                "forcing target length differs from the quadrature grid",
            ));
        }
        let order = self.basis.order();
        let mut rhs = DVector::<f64>::zeros(self.basis.len());
        for (q, &r) in target.iter().enumerate() {
            let wr = self.weights[q] * r;
            for i in 0..order {
                rhs[self.first[q] + i] += wr * self.values[q][i];
            }
        }
        Ok(self.chol.solve(&rhs).iter().copied().collect())
    }
}

fn check(curve: &dyn StateCurve, theta: &[f64], system: &DynamicalSystem) -> Result<()> {
    if curve.dim() != system.dim || theta.len() != system.param_dim() {
        return Err(Error::invalid(
            "smooth, parameters and model dimensions disagree",
        ));
    }
    if matches!(system.forcing, ForcingSpec::None) {
        return Err(Error::invalid("model has no forcing injection point"));
    }
    Ok(())
}

fn unforced_theta(system: &DynamicalSystem, theta: &[f64]) -> Vec<f64> {
    let mut th = theta.to_vec();
    if let ForcingSpec::ParameterReplacement { param, nominal } = system.forcing {
        th[param] = nominal;
    }
    th
}

fn finish(
    s: &CurveSamples,
    system: &DynamicalSystem,
    theta: &[f64],
    g: SplineFunction,
    lambda_g: f64,
) -> ForcingEstimate {
    let d = s.dim;
    let mut residuals = vec![0.0; s.len() * d];
    let mut gv = [0.0];
    let mut f = vec![0.0; d];
    let mut objective_forced = 0.0;
    for q in 0..s.len() {
        g.eval_into(s.t[q], 0, &mut gv);
        system.forced_rate(s.state(q), s.t[q], theta, &gv, &mut f);
        for i in 0..d {
            let r = s.deriv(q)[i] - f[i];
            residuals[q * d + i] = r;
            objective_forced += s.w[q] * r * r;
        }
    }
    ForcingEstimate {
        objective_unforced: objective(s, system, &unforced_theta(system, theta)),
        objective: objective_forced,
        injection: system.forcing,
        theta: theta.to_vec(),
        lambda_g,
        g,
        residuals,
    }
}

/// Fits the forcing coefficients `D` with `θ̂` held fixed: closed-form
/// penalised least squares for additive forcing, Gauss–Newton for
/// parameter replacement.
pub fn estimate_forcing(
    curve: &dyn StateCurve,
    theta: &[f64],
    system: &DynamicalSystem,
    g_basis: &BSplineBasis,
    lambda_g: f64,
    quad: &QuadGrid,
) -> Result<ForcingEstimate> {
    check(curve, theta, system)?;
    match system.forcing {
        ForcingSpec::Additive { .. } => {
            let design = AdditiveForcingDesign::new(g_basis, quad, lambda_g)?;
            estimate_additive_with(curve, theta, system, &design, quad)
        }
        _ => estimate_forcing_gauss_newton(curve, theta, system, g_basis, lambda_g, quad),
    }
}

/// Additive forcing with a prebuilt design.
pub fn estimate_additive_with(
    curve: &dyn StateCurve,
    theta: &[f64],
    system: &DynamicalSystem,
    design: &AdditiveForcingDesign,
    quad: &QuadGrid,
) -> Result<ForcingEstimate> {
    check(curve, theta, system)?;
    let ForcingSpec::Additive { target } = system.forcing else {
        return Err(Error::invalid("model forcing is not additive"));
    };
    let s = CurveSamples::new(curve, quad)?;
    let d = s.dim;
    let mut f = vec![0.0; d];
    let r: Vec<f64> = (0..s.len())
        .map(|q| {
            system.rate(s.state(q), s.t[q], theta, &mut f);
            s.deriv(q)[target] - f[target]
        })
        .collect();
    let coef = design.fit(&r)?;
    let g = SplineFunction::new(design.basis().clone(), 1, coef)?;
    Ok(finish(&s, system, theta, g, design.lambda()))
}

/// Gauss–Newton fit of `D` for any injection mode. The derivative of the
/// rate with respect to the forcing value is taken by central differences.
pub fn estimate_forcing_gauss_newton(
    curve: &dyn StateCurve,
    theta: &[f64],
    system: &DynamicalSystem,
    g_basis: &BSplineBasis,
    lambda_g: f64,
    quad: &QuadGrid,
) -> Result<ForcingEstimate> {
    check(curve, theta, system)?;
    if !(lambda_g >= 0.0) || !lambda_g.is_finite() {
        return Err(Error::invalid("forcing penalty must be finite and >= 0"));
    }
    let s = CurveSamples::new(curve, quad)?;
    let d = s.dim;
    let n = s.len();
    let k = g_basis.len();
    let order = g_basis.order();
    let nz: Vec<_> = s.t.iter().map(|&t| g_basis.eval_nonzero(t, 0)).collect();
    let sqrt_w: Vec<f64> = s.w.iter().map(|w| w.sqrt()).collect();
    let g_at = |coef: &[f64], q: usize| -> f64 {
        (0..order)
            .map(|i| coef[nz[q].first + i] * nz[q].values[0][i])
            .sum()
    };
    let start = match system.forcing {
        ForcingSpec::ParameterReplacement { nominal, .. } => vec![nominal; k],
        _ => vec![0.0; k],
    };
    let out = gauss_newton(
        |coef, r| {
            let mut f = vec![0.0; d];
            for q in 0..n {
                system.forced_rate(s.state(q), s.t[q], theta, &[g_at(coef, q)], &mut f);
                for i in 0..d {
                    r[q * d + i] = sqrt_w[q] * (s.deriv(q)[i] - f[i]);
                }
            }
        },
        |coef, _, j| {
            j.fill(0.0);
            let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
            for q in 0..n {
                let g = g_at(coef, q);
                let h = 1e-6 * g.abs().max(1.0);
                system.forced_rate(s.state(q), s.t[q], theta, &[g + h], &mut fp);
                system.forced_rate(s.state(q), s.t[q], theta, &[g - h], &mut fm);
                for i in 0..d {
                    let dfdg = (fp[i] - fm[i]) / (2.0 * h);
                    for b in 0..order {
                        j[(q * d + i, nz[q].first + b)] = -sqrt_w[q] * dfdg * nz[q].values[0][b];
                    }
                }
            }
        },
        &start,
        n * d,
        lambda_g,
        RANK_CONTEXT,
    )
    .map_err(|e| match e {
        Error::Rank { context, .. } => Error::Rank {
            context,
            hint: RANK_HINT.into(),
        },
        e => e,
    })?;
    let g = SplineFunction::new(g_basis.clone(), 1, out.params)?;
    Ok(finish(&s, system, theta, g, lambda_g))
}
