use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Highest supported spline order (degree + 1).
pub const MAX_ORDER: usize = 8;
/// Highest derivative returned by [`BSplineBasis::eval_nonzero`].
pub const MAX_DERIV: usize = 3;

/// A clamped B-spline basis on `[breakpoints[0], breakpoints[last]]`.
///
/// Boundary knots carry full multiplicity `order`; interior breakpoints are
/// simple knots, so the basis has `spans + order - 1` functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct BSplineBasis {
    order: usize,
    breakpoints: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    order: usize,
    breakpoints: Vec<f64>,
}

impl TryFrom<BasisRepr> for BSplineBasis {
    type Error = Error;
    fn try_from(r: BasisRepr) -> Result<Self> {
        BSplineBasis::new(r.order, r.breakpoints)
    }
}

impl From<BSplineBasis> for BasisRepr {
    fn from(b: BSplineBasis) -> Self {
        BasisRepr {
            order: b.order,
            breakpoints: b.breakpoints,
        }
    }
}

/// Values (and derivatives) of the `order` basis functions that are nonzero
/// at a point. `values[q][j]` is the `q`-th derivative of basis `first + j`.
#[derive(Debug, Clone, Copy)]
pub struct NonzeroBasis {
    pub first: usize,
    pub values: [[f64; MAX_ORDER]; MAX_DERIV + 1],
}

impl BSplineBasis {
    pub fn new(order: usize, breakpoints: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&order) {
            return Err(Error::invalid(alloc::format!(
                "spline order must be in 2..={MAX_ORDER}, got {order}"
            )));
        }
        if breakpoints.len() < 2 {
            return Err(Error::invalid("a basis needs at least two breakpoints"));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::invalid(
                "breakpoints must be finite and strictly increasing",
            ));
        }
        Ok(Self { order, breakpoints })
    }

    /// Uniform breakpoints over `domain` with spacing as close to
    /// `spacing` as possible without exceeding it.
    ///
    /// The number of spans is `(b - a) / spacing` rounded up, ignoring a
    /// relative excess of up to 1e-9 so that `[0, 55]` with spacing `0.25`
    /// gives exactly 220 spans.
    pub fn uniform(order: usize, domain: (f64, f64), spacing: f64) -> Result<Self> {
        let (a, b) = domain;
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::invalid("knot spacing must be positive"));
        }
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(alloc::format!(
                "degenerate basis domain [{a}, {b}]"
            )));
        }
        let ratio = (b - a) / spacing;
        let spans = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0) as usize;
        Self::with_spans(order, domain, spans)
    }

    /// Uniform breakpoints over `domain` with a fixed number of spans.
    pub fn with_spans(order: usize, domain: (f64, f64), spans: usize) -> Result<Self> {
        let (a, b) = domain;
        if spans == 0 {
            return Err(Error::invalid("a basis needs at least one span"));
        }
        if !(b > a) {
            return Err(Error::invalid(alloc::format!(
                "degenerate basis domain [{a}, {b}]"
            )));
        }
        let h = (b - a) / spans as f64;
        let mut breaks: Vec<f64> = (0..=spans).map(|i| a + h * i as f64).collect();
        breaks[spans] = b;
        Self::new(order, breaks)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn spans(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.spans() + self.order - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[self.spans()])
    }

    /// Width of the widest basis-function support (`order` consecutive spans).
    pub fn support_width(&self) -> f64 {
        let o = self.order.min(self.spans());
        self.breakpoints
            .windows(o + 1)
            .map(|w| w[o] - w[0])
            .fold(0.0, f64::max)
    }

    #[inline]
    fn knot(&self, j: usize) -> f64 {
        let nb = self.breakpoints.len() as isize;
        let idx = (j as isize - (self.order as isize - 1)).clamp(0, nb - 1);
        self.breakpoints[idx as usize]
    }

    /// Span index `s` with `breakpoints[s] <= t < breakpoints[s + 1]`; the
    /// right end belongs to the last span. `t` is clamped to the domain.
    pub fn find_span(&self, t: f64) -> usize {
        let spans = self.spans();
        let (a, b) = self.domain();
        if !(t > a) {
            return 0;
        }
        if t >= b {
            return spans - 1;
        }
        // upper_bound on the breakpoints
        let idx = self.breakpoints.partition_point(|&x| x <= t);
        idx.saturating_sub(1).min(spans - 1)
    }

    /// Nonzero basis functions and their first `nderiv` derivatives at `t`
    /// (clamped to the domain).
    pub fn eval_nonzero(&self, t: f64, nderiv: usize) -> NonzeroBasis {
        let (a, b) = self.domain();
        let u = t.clamp(a, b);
        let p = self.order - 1;
        let s = self.find_span(u);
        let i = s + p;
        let n = nderiv.min(MAX_DERIV);

        let mut ndu = [[0.0_f64; MAX_ORDER]; MAX_ORDER];
        let mut left = [0.0_f64; MAX_ORDER];
        let mut right = [0.0_f64; MAX_ORDER];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - self.knot(i + 1 - j);
            right[j] = self.knot(i + j) - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut out = NonzeroBasis {
            first: s,
            values: [[0.0; MAX_ORDER]; MAX_DERIV + 1],
        };
        for j in 0..=p {
            out.values[0][j] = ndu[j][p];
        }
        let pi = p as isize;
        let mut a = [[0.0_f64; MAX_ORDER]; 2];
        for r in 0..=pi {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=(n as isize) {
                if k > pi {
                    break;
                }
                let mut d = 0.0;
                let rk = r - k;
                let pk = pi - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { -rk };
                let j2 = if r - 1 <= pk { k - 1 } else { pi - r };
                for j in j1..=j2 {
                    let jj = j as usize;
                    a[s2][jj] =
                        (a[s1][jj] - a[s1][jj - 1]) / ndu[(pk + 1) as usize][(rk + j) as usize];
                    d += a[s2][jj] * ndu[(rk + j) as usize][pk as usize];
                }
                if r <= pk {
                    a[s2][k as usize] =
                        -a[s1][(k - 1) as usize] / ndu[(pk + 1) as usize][r as usize];
                    d += a[s2][k as usize] * ndu[r as usize][pk as usize];
                }
                out.values[k as usize][r as usize] = d;
                core::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=n.min(p) {
            for j in 0..=p {
                out.values[k][j] *= fac;
            }
            fac *= (p - k) as f64;
        }
        out
    }

    /// All `len()` basis values (derivative `deriv`) at `t`.
    pub fn eval_dense(&self, t: f64, deriv: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        if deriv > MAX_DERIV {
            return v;
        }
        let nz = self.eval_nonzero(t, deriv);
        for j in 0..self.order {
            v[nz.first + j] = nz.values[deriv][j];
        }
        v
    }

    /// Gram matrix `∫ ψ_j^(q)(t) ψ_k^(q)(t) dt` over the domain.
    ///
    /// Integrated span by span with `order`-point Gauss–Legendre quadrature,
    /// which is exact for the piecewise polynomial integrand.
    pub fn penalty_matrix(&self, deriv: usize) -> DMatrix<f64> {
        let k = self.len();
        let mut omega = DMatrix::<f64>::zeros(k, k);
        if deriv > MAX_DERIV || deriv >= self.order {
            return omega;
        }
        let (nodes, weights) = gauss_legendre(self.order);
        for s in 0..self.spans() {
            let (lo, hi) = (self.breakpoints[s], self.breakpoints[s + 1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in nodes.iter().zip(&weights) {
                let nz = self.eval_nonzero(mid + half * x, deriv);
                debug_assert_eq!(nz.first, s);
                let v = &nz.values[deriv];
                for a in 0..self.order {
                    for b in 0..self.order {
                        omega[(s + a, s + b)] += w * half * v[a] * v[b];
                    }
                }
            }
        }
        omega
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pi = core::f64::consts::PI;
    for i in 0..n.div_ceil(2) {
        let mut x = (pi * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A vector-valued spline `s(t) = Ψ(t) C` with `C` a `len × outputs` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFunction {
    basis: BSplineBasis,
    outputs: usize,
    /// Row-major `len × outputs` coefficient matrix.
    coefficients: Vec<f64>,
}

impl SplineFunction {
    pub fn new(basis: BSplineBasis, outputs: usize, coefficients: Vec<f64>) -> Result<Self> {
        if outputs == 0 || coefficients.len() != basis.len() * outputs {
            return Err(Error::invalid(alloc::format!(
                "coefficient matrix must be {} x {outputs}, got {} values",
                basis.len(),
                coefficients.len()
            )));
        }
        Ok(Self {
            basis,
            outputs,
            coefficients,
        })
    }

    /// Spline with all coefficients equal to `value` per output (a constant
    /// function, by partition of unity).
    pub fn constant(basis: BSplineBasis, value: &[f64]) -> Self {
        let mut c = Vec::with_capacity(basis.len() * value.len());
        for _ in 0..basis.len() {
            c.extend_from_slice(value);
        }
        Self {
            basis,
            outputs: value.len(),
            coefficients: c,
        }
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn domain(&self) -> (f64, f64) {
        self.basis.domain()
    }

    /// Writes the `deriv`-th derivative at `t` into `out` (length `outputs`).
    pub fn eval_into(&self, t: f64, deriv: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if deriv > MAX_DERIV {
            return;
        }
        let nz = self.basis.eval_nonzero(t, deriv);
        let m = self.outputs;
        for j in 0..self.basis.order() {
            let v = nz.values[deriv][j];
            let row = &self.coefficients[(nz.first + j) * m..(nz.first + j + 1) * m];
            for (o, c) in out.iter_mut().zip(row) {
                *o += v * c;
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.derivative(t, 0)
    }

    pub fn derivative(&self, t: f64, deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        self.eval_into(t, deriv, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        let b = BSplineBasis::uniform(4, (0.0, 55.0), 1.0).unwrap();
        assert_eq!(b.spans(), 55);
        assert_eq!(b.len(), 58);
        let b = BSplineBasis::uniform(4, (0.0, 55.0), 0.25).unwrap();
        assert_eq!(b.spans(), 220);
        assert_eq!(b.len(), 223);
        assert!((b.support_width() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_basis_partition_of_unity() {
        let b = BSplineBasis::uniform(2, (0.0, 1.0), 0.5).unwrap();
        let v = b.eval_dense(0.25, 0);
        assert_eq!(v.len(), 3);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(BSplineBasis::uniform(4, (1.0, 1.0), 0.1).is_err());
        assert!(BSplineBasis::uniform(4, (0.0, 1.0), 0.0).is_err());
        assert!(BSplineBasis::new(9, alloc::vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre(n);
            for deg in [2 * n - 2, 2 * n - 1] {
                let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 0 {
                    2.0 / (deg + 1) as f64
                } else {
                    0.0
                };
                assert!((integral - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn penalty_of_quadratic_is_exact() {
        // s(t) = t^2 on [0, 2] has ∫ (s'')^2 = 8.
        let b = BSplineBasis::uniform(4, (0.0, 2.0), 0.5).unwrap();
        // Interpolate t^2 by solving the collocation system at Greville points.
        let k = b.len();
        let greville: Vec<f64> = (0..k)
            .map(|j| (1..4).map(|i| b.knot(j + i)).sum::<f64>() / 3.0)
            .collect();
        let mut a = DMatrix::<f64>::zeros(k, k);
        for (r, &g) in greville.iter().enumerate() {
            let row = b.eval_dense(g, 0);
            for c in 0..k {
                a[(r, c)] = row[c];
            }
        }
        let rhs = nalgebra::DVector::from_iterator(k, greville.iter().map(|g| g * g));
        let c = a.lu().solve(&rhs).unwrap();
        let omega = b.penalty_matrix(2);
        let val = (c.transpose() * &omega * &c)[(0, 0)];
        assert!((val - 8.0).abs() < 1e-10, "{val}");
    }

    #[test]
    fn constant_spline_and_json() {
        let b = BSplineBasis::uniform(4, (0.0, 1.0), 0.25).unwrap();
        let f = SplineFunction::constant(b, &[1.5, -2.0]);
        let v = f.eval(0.3);
        assert!((v[0] - 1.5).abs() < 1e-14 && (v[1] + 2.0).abs() < 1e-14);
        assert!(f.derivative(0.3, 1)[0].abs() < 1e-12);
        let json = serde_json::to_string(&f).unwrap();
        let back: SplineFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        let bad = json.replace("0.25", "-3.0");
        assert!(serde_json::from_str::<SplineFunction>(&bad).is_err());
    }
}
