use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::cholesky;
use crate::{Error, Result};

pub(crate) const MAX_ITER: usize = 100;
pub(crate) const REL_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

pub(crate) struct GnOutcome {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimises `‖r(p)‖² + ridge‖p‖²` by Gauss–Newton with step halving.
///
/// `resid` fills a residual vector of length `m`; `jac` fills the `m × n`
/// Jacobian. Stops when the relative objective decrease falls below
/// [`REL_TOL`] or no step along the Gauss–Newton direction decreases it.
pub(crate) fn gauss_newton<R, J>(
    mut resid: R,
    mut jac: J,
    p0: &[f64],
    m: usize,
    ridge: f64,
    context: &str,
) -> Result<GnOutcome>
where
    R: FnMut(&[f64], &mut [f64]),
    J: FnMut(&[f64], &[f64], &mut DMatrix<f64>),
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    let mut trial_r = vec![0.0; m];
    let mut j = DMatrix::<f64>::zeros(m, n);

    let objective = |r: &[f64], p: &[f64]| {
        r.iter().map(|v| v * v).sum::<f64>() + ridge * p.iter().map(|v| v * v).sum::<f64>()
    };
    resid(&p, &mut r);
    let mut obj = objective(&r, &p);
    if !obj.is_finite() {
        return Err(Error::Convergence {
            context: context.into(),
            iterations: 0,
            trace: vec![obj],
        });
    }
    let mut trace = vec![obj];

    for it in 1..=MAX_ITER {
        if obj == 0.0 {
            return Ok(GnOutcome {
                params: p,
                objective: obj,
                iterations: it - 1,
            });
        }
        jac(&p, &r, &mut j);
        let mut h = j.tr_mul(&j);
        let mut g = j.tr_mul(&DVector::from_column_slice(&r));
        for i in 0..n {
            h[(i, i)] += ridge;
            g[i] += ridge * p[i];
        }
        let chol = cholesky(
            h,
            context,
            "parameters are not identifiable from this trajectory",
        )?;
        let step = chol.solve(&g);

        let mut t = 1.0;
        let mut accepted = None;
        let mut trial = vec![0.0; n];
        for _ in 0..MAX_HALVINGS {
            for i in 0..n {
                trial[i] = p[i] - t * step[i];
            }
            resid(&trial, &mut trial_r);
            let o = objective(&trial_r, &trial);
            if o.is_finite() && o <= obj {
                accepted = Some(o);
                break;
            }
            t *= 0.5;
        }
        let Some(new_obj) = accepted else {
            // no descent left along the Gauss-Newton direction
            return Ok(GnOutcome {
                params: p,
                objective: obj,
                iterations: it,
            });
        };
        let rel = (obj - new_obj) / obj;
        core::mem::swap(&mut p, &mut trial);
        core::mem::swap(&mut r, &mut trial_r);
        obj = new_obj;
        trace.push(obj);
        if rel < REL_TOL {
            return Ok(GnOutcome {
                params: p,
                objective: obj,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        context: context.into(),
        iterations: MAX_ITER,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_rosenbrock_as_least_squares() {
        // r = (10(y - x²), 1 - x), minimum at (1, 1)
        let out = gauss_newton(
            |p, r| {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
            },
            |p, _, j| {
                j[(0, 0)] = -20.0 * p[0];
                j[(0, 1)] = 10.0;
                j[(1, 0)] = -1.0;
                j[(1, 1)] = 0.0;
            },
            &[-1.2, 1.0],
            2,
            0.0,
            "test",
        )
        .unwrap();
        assert!((out.params[0] - 1.0).abs() < 1e-8 && (out.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn singular_jacobian_is_a_rank_error() {
        let err = gauss_newton(
            |p, r| r[0] = p[0] + p[1] - 1.0,
            |_, _, j| {
                j[(0, 0)] = 1.0;
                j[(0, 1)] = 1.0;
            },
            &[0.0, 0.0],
            1,
            0.0,
            "test",
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::Rank { .. }));
    }
}
