use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use nalgebra::DMatrix;

use super::{BSplineBasis, NonzeroBasis, SplineFunction};
use crate::dynsys::TimeSeries;
use crate::{Error, Result};

/// Penalised least-squares smoother on fixed observation times.
///
/// Minimises `Σ_i ‖y_i − s(t_i)‖² + λ ∫ ‖s''(t)‖² dt` per output column.
/// The problem is solved as the least-squares problem `[B; √λ E] c ≈ [y; 0]`
/// with `EᵀE` the exact penalty Gram matrix, through a QR factorisation that
/// depends only on the times, the basis and `λ`. It is computed once and
/// reused for every response (the residual bootstrap refits on the same grid
/// many times).
#[derive(Debug, Clone)]
pub struct PenalizedSmoother {
    basis: BSplineBasis,
    rows: Vec<NonzeroBasis>,
    /// Upper-triangular factor.
    r: DMatrix<f64>,
    /// Top `n` rows of the orthogonal factor, transposed (`K × n`).
    qt: DMatrix<f64>,
    lambda: f64,
}

impl PenalizedSmoother {
    pub fn new(basis: BSplineBasis, times: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(
                "penalty weight must be finite and nonnegative",
            ));
        }
        let (a, b) = basis.domain();
        let tol = 1e-9 * (b - a);
        if times.iter().any(|&t| !(t >= a - tol && t <= b + tol)) {
            return Err(Error::invalid(
                "observation times fall outside the basis domain",
            ));
        }
        let k = basis.len();
        let n = times.len();
        let order = basis.order();
        let rows: Vec<NonzeroBasis> = times.iter().map(|&t| basis.eval_nonzero(t, 0)).collect();
        let mut aug = DMatrix::<f64>::zeros(n + k, k);
        for (r, nz) in rows.iter().enumerate() {
            for i in 0..order {
                aug[(r, nz.first + i)] = nz.values[0][i];
            }
        }
        if lambda > 0.0 {
            let eig = basis.penalty_matrix(2).symmetric_eigen();
            // the null space (linear functions) must stay exactly unpenalised
            let floor = 1e-9 * eig.eigenvalues.amax();
            for i in 0..k {
                let e = eig.eigenvalues[i];
                let w = if e > floor { (lambda * e).sqrt() } else { 0.0 };
                for j in 0..k {
                    aug[(n + i, j)] = w * eig.eigenvectors[(j, i)];
                }
            }
        }
        let qr = aug.qr();
        let r = qr.r();
        let max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let min = (0..k)
            .map(|i| r[(i, i)].abs())
            .fold(f64::INFINITY, f64::min);
        if !(min > 1e-7 * max) {
            return Err(Error::rank(
                "penalised smoothing normal equations",
                "too few observations for the basis; use a penalty weight > 0",
            ));
        }
        let q = qr.q();
        let qt = q.rows(0, n).transpose();
        Ok(Self {
            basis,
            rows,
            r,
            qt,
            lambda,
        })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Smooths `values` (row-major, `len() × outputs`).
    pub fn fit(&self, values: &[f64], outputs: usize) -> Result<SplineFunction> {
        let n = self.rows.len();
        if outputs == 0 || values.len() != n * outputs {
            return Err(Error::invalid(
                "response matrix does not match the observation count",
            ));
        }
        let k = self.basis.len();
        let y = DMatrix::from_row_slice(n, outputs, values);
        let rhs = &self.qt * y;
        let sol = self
            .r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::rank("penalised smoothing", "singular triangular factor"))?;
        let mut coef = alloc::vec![0.0; k * outputs];
        for j in 0..k {
            for c in 0..outputs {
                coef[j * outputs + c] = sol[(j, c)];
            }
        }
        SplineFunction::new(self.basis.clone(), outputs, coef)
    }

    /// Hat-matrix trace, i.e. the effective degrees of freedom per output.
    pub fn effective_df(&self) -> f64 {
        self.qt.norm_squared()
    }
}

/// Penalised cubic-spline (or general order) smooth of every column of
/// `data` with a second-derivative roughness penalty of weight `lambda`.
pub fn smooth_timeseries(
    data: &TimeSeries,
    basis: &BSplineBasis,
    lambda: f64,
) -> Result<SplineFunction> {
    PenalizedSmoother::new(basis.clone(), data.times(), lambda)?.fit(data.values(), data.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::uniform_grid;

    fn series(times: &[f64], f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries::new(times.to_vec(), 1, times.iter().map(|&t| f(t)).collect()).unwrap()
    }

    #[test]
    fn reproduces_cubics_without_penalty() {
        let times = uniform_grid(0.0, 4.0, 81).unwrap();
        let cubic = |t: f64| 0.5 - t + 0.3 * t * t - 0.07 * t * t * t;
        let ts = series(&times, cubic);
        let basis = BSplineBasis::uniform(4, (0.0, 4.0), 0.5).unwrap();
        let s = smooth_timeseries(&ts, &basis, 0.0).unwrap();
        for &t in &times {
            assert!((s.eval(t)[0] - cubic(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn huge_penalty_gives_least_squares_line() {
        let times = uniform_grid(0.0, 3.0, 31).unwrap();
        let ts = series(&times, |t| (2.0 * t).sin() + 0.4 * t);
        let basis = BSplineBasis::uniform(4, (0.0, 3.0), 0.25).unwrap();
        let s = smooth_timeseries(&ts, &basis, 1e12).unwrap();
        // ordinary least-squares line through the data
        let n = times.len() as f64;
        let (mt, my) = (
            times.iter().sum::<f64>() / n,
            ts.values().iter().sum::<f64>() / n,
        );
        let sxy: f64 = times
            .iter()
            .zip(ts.values())
            .map(|(t, y)| (t - mt) * (y - my))
            .sum();
        let sxx: f64 = times.iter().map(|t| (t - mt) * (t - mt)).sum();
        let slope = sxy / sxx;
        for &t in &times {
            let line = my + slope * (t - mt);
            assert!(
                (s.eval(t)[0] - line).abs() < 1e-4,
                "{t} {} {line}",
                s.eval(t)[0]
            );
        }
    }

    #[test]
    fn rank_error_suggests_penalty() {
        let times = [0.0, 1.0, 2.0];
        let ts = series(&times, |t| t);
        let basis = BSplineBasis::uniform(4, (0.0, 2.0), 0.25).unwrap();
        match smooth_timeseries(&ts, &basis, 0.0) {
            Err(Error::Rank { hint, .. }) => assert!(hint.contains("penalty weight > 0")),
            other => panic!("{other:?}"),
        }
        assert!(smooth_timeseries(&ts, &basis, 0.1).is_ok());
    }
}
