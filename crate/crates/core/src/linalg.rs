use alloc::format;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Pivot ratio below which a Cholesky factor is treated as singular.
const RCOND_FLOOR: f64 = 1e-13;

/// Cholesky factorisation that reports numerical rank deficiency instead of
/// silently returning a factor with negligible pivots.
pub(crate) fn cholesky(a: DMatrix<f64>, context: &str, hint: &str) -> Result<Cholesky<f64, Dyn>> {
    cholesky_with(a, context, hint, true)
}

/// As [`cholesky`]; `check_pivots = false` only rejects matrices that are not
/// numerically positive definite at all.
pub(crate) fn cholesky_with(
    a: DMatrix<f64>,
    context: &str,
    hint: &str,
    check_pivots: bool,
) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    if n == 0 || !(max_diag > 0.0) || !max_diag.is_finite() {
        return Err(Error::rank(context, hint));
    }
    let chol = a.cholesky().ok_or_else(|| Error::rank(context, hint))?;
    let l = chol.l_dirty();
    let mut min_piv = f64::INFINITY;
    let mut max_piv = 0.0_f64;
    for i in 0..n {
        let p = l[(i, i)] * l[(i, i)];
        min_piv = min_piv.min(p);
        max_piv = max_piv.max(p);
    }
    if check_pivots && !(min_piv > RCOND_FLOOR * max_piv) {
        return Err(Error::rank(
            context,
            format!("{hint} (pivot ratio {:.3e})", min_piv / max_piv),
        ));
    }
    Ok(chol)
}

/// Solves the weighted normal equations `(XᵀWX + ridge·I) β = XᵀWy`.
pub(crate) fn weighted_least_squares(
    x: &DMatrix<f64>,
    w: &[f64],
    y: &DVector<f64>,
    ridge: f64,
    context: &str,
    hint: &str,
) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    for r in 0..n {
        for i in 0..p {
            let xi = w[r] * x[(r, i)];
            if xi == 0.0 {
                continue;
            }
            xtwy[i] += xi * y[r];
            for j in 0..=i {
                xtwx[(i, j)] += xi * x[(r, j)];
            }
        }
    }
    for i in 0..p {
        xtwx[(i, i)] += ridge;
        for j in 0..i {
            xtwx[(j, i)] = xtwx[(i, j)];
        }
    }
    let chol = cholesky(xtwx, context, hint)?;
    Ok(chol.solve(&xtwy))
}
