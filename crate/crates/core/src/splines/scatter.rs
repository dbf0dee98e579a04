use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BSplineBasis;
use crate::linalg;
use crate::{Error, Result};

/// Whether multi-predictor smooths are sums of univariate terms or a single
/// tensor-product surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Additive,
    TensorProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatterSettings {
    /// Basis dimension cap for a single predictor (further capped at n/4).
    pub univariate_dim: usize,
    /// Basis dimension of each term when there are several predictors.
    pub term_dim: usize,
    /// Marginal basis dimension for tensor-product smooths.
    pub tensor_dim: usize,
    pub order: usize,
    pub structure: Structure,
    /// Fixed relative smoothing weight; `None` selects it by GCV.
    pub lambda: Option<f64>,
    /// Search interval for GCV, in log10 of the relative smoothing weight.
    pub log10_lambda_range: (f64, f64),
}

impl Default for ScatterSettings {
    fn default() -> Self {
        Self {
            univariate_dim: 40,
            term_dim: 10,
            tensor_dim: 5,
            order: 4,
            structure: Structure::Additive,
            lambda: None,
            log10_lambda_range: (-9.0, 10.0),
        }
    }
}

impl ScatterSettings {
    /// Basis dimension for each of `p` additive terms with `n` points.
    pub fn additive_dims(&self, p: usize, n: usize) -> Vec<usize> {
        let cap = if p == 1 {
            self.univariate_dim
        } else {
            self.term_dim
        };
        vec![cap.min(n / 4).max(self.order); p]
    }
}

/// Coordinates and per-coordinate basis dimension of one smooth term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpec {
    pub coords: Vec<usize>,
    pub dim: usize,
}

impl TermSpec {
    pub fn new(coords: Vec<usize>, dim: usize) -> Self {
        Self { coords, dim }
    }
}

/// One smooth term: a basis over the listed predictor coordinates (rescaled
/// to `[0, 1]`), reparameterised to satisfy a sum-to-zero constraint over
/// the fitting points via a Householder reflection.
#[derive(Debug, Clone)]
struct Term {
    coords: Vec<usize>,
    bases: Vec<BSplineBasis>,
    lo: Vec<f64>,
    width: Vec<f64>,
    /// Householder vector `v`; constrained columns are `(I − 2vvᵀ/vᵀv)[:, 1..]`.
    house: DVector<f64>,
    house_scale: f64,
}

impl Term {
    fn raw_dim(&self) -> usize {
        self.bases.iter().map(BSplineBasis::len).product()
    }

    fn dim(&self) -> usize {
        self.raw_dim() - 1
    }

    /// Unconstrained basis row at a predictor vector.
    fn raw_row(&self, point: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut stride = 1;
        let mut first = true;
        // kron over coordinates, last coordinate varying fastest
        let mut buf = vec![0.0; out.len()];
        for (b, (&c, (&lo, &w))) in self
            .bases
            .iter()
            .zip(self.coords.iter().zip(self.lo.iter().zip(&self.width)))
            .rev()
        {
            let u = ((point[c] - lo) / w).clamp(0.0, 1.0);
            let nz = b.eval_nonzero(u, 0);
            if first {
                for j in 0..b.order() {
                    out[nz.first + j] = nz.values[0][j];
                }
                first = false;
            } else {
                buf[..stride].copy_from_slice(&out[..stride]);
                out[..stride * b.len()].iter_mut().for_each(|o| *o = 0.0);
                for j in 0..b.order() {
                    let v = nz.values[0][j];
                    let base = (nz.first + j) * stride;
                    for s in 0..stride {
                        out[base + s] = v * buf[s];
                    }
                }
            }
            stride *= b.len();
        }
    }

    /// Constrained row, written to `out` (length `dim()`).
    fn row(&self, point: &[f64], raw: &mut [f64], out: &mut [f64]) {
        self.raw_row(point, raw);
        let dot: f64 = raw.iter().zip(self.house.iter()).map(|(a, b)| a * b).sum();
        let f = self.house_scale * dot;
        for j in 1..raw.len() {
            out[j - 1] = raw[j] - f * self.house[j];
        }
    }

    /// Roughness penalty on the constrained coefficients, plus a small
    /// penalty on its null space so that the whole term can shrink to zero.
    fn penalty(&self) -> DMatrix<f64> {
        let raw = self.raw_dim();
        let mut s = DMatrix::<f64>::zeros(raw, raw);
        let omegas: Vec<DMatrix<f64>> = self.bases.iter().map(|b| b.penalty_matrix(2)).collect();
        for (j, om) in omegas.iter().enumerate() {
            // I ⊗ … ⊗ Ω_j ⊗ … ⊗ I with the last coordinate fastest
            let mut m = DMatrix::<f64>::identity(1, 1);
            for (i, b) in self.bases.iter().enumerate() {
                let f = if i == j {
                    om.clone()
                } else {
                    DMatrix::identity(b.len(), b.len())
                };
                m = m.kronecker(&f);
            }
            s += m;
        }
        // H S H, then drop the first row/column
        let h = householder_matrix(&self.house, self.house_scale);
        let full = &h * s * &h;
        let d = raw - 1;
        let mut c = full.view((1, 1), (d, d)).into_owned();
        c = (&c + c.transpose()) * 0.5;
        let eig = c.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-9 * max;
        let min_pos = eig
            .eigenvalues
            .iter()
            .cloned()
            .filter(|&e| e > floor)
            .fold(f64::INFINITY, f64::min);
        let shrink = if min_pos.is_finite() {
            0.1 * min_pos
        } else {
            1.0
        };
        for (i, &e) in eig.eigenvalues.iter().enumerate() {
            if e <= floor {
                let v = eig.eigenvectors.column(i);
                c += v * v.transpose() * shrink;
            }
        }
        c
    }
}

fn householder_matrix(v: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::<f64>::identity(n, n) - v * v.transpose() * scale
}

/// Householder vector mapping `c` onto a multiple of `e_1`.
fn householder(c: &DVector<f64>) -> (DVector<f64>, f64) {
    let norm = c.norm();
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * norm;
    let vv = v.norm_squared();
    let scale = if vv > 0.0 { 2.0 / vv } else { 0.0 };
    (v, scale)
}

/// Result of one fit on a [`PreparedDesign`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterFit {
    /// `p × m` coefficients (first row is the intercept).
    pub coefficients: DMatrix<f64>,
    /// Fitted values at the design points (`n × m`).
    pub fitted: DMatrix<f64>,
    pub edf: f64,
    pub lambda: f64,
    pub gcv: f64,
}

/// Design, penalty and eigen-decomposition of a penalised additive (or
/// tensor-product) spline regression for fixed predictor values.
///
/// With `A = XᵀX` factored as `LLᵀ` and `L⁻¹SL⁻ᵀ = UΛUᵀ`, the fitted
/// coefficients for any response are `L⁻ᵀU diag(1/(1+λΛ)) UᵀL⁻¹Xᵀy`, so GCV
/// over `λ` costs `O(p)` per candidate once `UᵀL⁻¹Xᵀy` is known. Refitting
/// new responses on the same predictors (permutation tests) reuses all of it.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    predictor_dim: usize,
    terms: Vec<Term>,
    x: DMatrix<f64>,
    /// `L⁻ᵀU`
    transform: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    settings: ScatterSettings,
}

impl PreparedDesign {
    /// Builds the design with default basis dimensions from `settings`.
    pub fn new(
        predictors: &DMatrix<f64>,
        settings: &ScatterSettings,
        domains: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        let dims = settings.additive_dims(predictors.ncols(), predictors.nrows());
        Self::with_dims(predictors, settings, &dims, domains)
    }

    /// Builds the design with explicit per-term basis dimensions (additive)
    /// or a single marginal dimension (tensor product, `dims[0]`).
    pub fn with_dims(
        predictors: &DMatrix<f64>,
        settings: &ScatterSettings,
        dims: &[usize],
        domains: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        let pd = predictors.ncols();
        let terms: Vec<TermSpec> = match settings.structure {
            Structure::Additive => {
                if dims.len() != pd {
                    return Err(Error::invalid(
                        "one basis dimension per predictor is required",
                    ));
                }
                (0..pd).map(|c| TermSpec::new(vec![c], dims[c])).collect()
            }
            Structure::TensorProduct => {
                let k = dims.first().copied().unwrap_or(settings.tensor_dim);
                vec![TermSpec::new((0..pd).collect(), k)]
            }
        };
        Self::with_terms(predictors, settings, &terms, domains)
    }

    /// Builds the design from an explicit list of smooth terms. Each term is
    /// univariate or a tensor product over its coordinates; `settings.structure`
    /// is ignored.
    pub fn with_terms(
        predictors: &DMatrix<f64>,
        settings: &ScatterSettings,
        term_specs: &[TermSpec],
        domains: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        let (n, pd) = predictors.shape();
        if pd == 0 {
            return Err(Error::invalid(
                "scatter smoother needs at least one predictor",
            ));
        }
        if term_specs
            .iter()
            .any(|t| t.coords.is_empty() || t.coords.len() > 3 || t.coords.iter().any(|&c| c >= pd))
        {
            return Err(Error::invalid(
                "each term needs 1 to 3 valid predictor coordinates",
            ));
        }
        if n < 2 {
            return Err(Error::invalid("scatter smoother needs at least two points"));
        }
        if predictors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("predictors must be finite"));
        }
        if let Some(d) = domains {
            if d.len() != pd {
                return Err(Error::invalid("one domain per predictor is required"));
            }
        }
        // coordinate ranges; constant coordinates are dropped
        let mut range = vec![None; pd];
        for (c, slot) in range.iter_mut().enumerate() {
            let col = predictors.column(c);
            let (mut a, mut b) = (col.min(), col.max());
            if let Some(d) = domains {
                a = a.min(d[c].0);
                b = b.max(d[c].1);
            }
            if b - a > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                *slot = Some((a, b - a));
            }
        }
        let order = settings.order;
        let make_basis =
            |k: usize| BSplineBasis::with_spans(order, (0.0, 1.0), k.max(order) + 1 - order);
        let mut specs: Vec<(Vec<usize>, Vec<BSplineBasis>, Vec<f64>, Vec<f64>)> = Vec::new();
        for spec in term_specs {
            let coords: Vec<usize> = spec
                .coords
                .iter()
                .copied()
                .filter(|&c| range[c].is_some())
                .collect();
            if coords.is_empty() {
                continue;
            }
            let bases = coords
                .iter()
                .map(|_| make_basis(spec.dim))
                .collect::<Result<Vec<_>>>()?;
            let lo = coords.iter().map(|&c| range[c].unwrap().0).collect();
            let width = coords.iter().map(|&c| range[c].unwrap().1).collect();
            specs.push((coords, bases, lo, width));
        }
        if specs.is_empty() {
            return Err(Error::DegenerateDesign(
                "all predictors are constant; the fit reduces to the response mean".into(),
            ));
        }

        let mut terms = Vec::with_capacity(specs.len());
        for (coords, bases, lo, width) in specs {
            let mut term = Term {
                coords,
                bases,
                lo,
                width,
                house: DVector::zeros(0),
                house_scale: 0.0,
            };
            let raw = term.raw_dim();
            let mut colsum = DVector::<f64>::zeros(raw);
            let mut buf = vec![0.0; raw];
            for r in 0..n {
                let point: Vec<f64> = predictors.row(r).iter().cloned().collect();
                term.raw_row(&point, &mut buf);
                for j in 0..raw {
                    colsum[j] += buf[j];
                }
            }
            let (v, s) = householder(&colsum);
            term.house = v;
            term.house_scale = s;
            terms.push(term);
        }

        let p = 1 + terms.iter().map(Term::dim).sum::<usize>();
        let mut x = DMatrix::<f64>::zeros(n, p);
        let mut point = vec![0.0; pd];
        let mut raw = vec![0.0; terms.iter().map(Term::raw_dim).max().unwrap_or(0)];
        let mut row = vec![0.0; raw.len()];
        for r in 0..n {
            for c in 0..pd {
                point[c] = predictors[(r, c)];
            }
            x[(r, 0)] = 1.0;
            let mut off = 1;
            for t in &terms {
                let d = t.dim();
                t.row(&point, &mut raw[..d + 1], &mut row[..d]);
                for j in 0..d {
                    x[(r, off + j)] = row[j];
                }
                off += d;
            }
        }

        let xtx = x.tr_mul(&x);
        // block-diagonal penalty, each block scaled to its design block
        let mut s = DMatrix::<f64>::zeros(p, p);
        let mut off = 1;
        for t in &terms {
            let d = t.dim();
            let pen = t.penalty();
            let design_tr: f64 = (off..off + d).map(|j| xtx[(j, j)]).sum();
            let pen_tr = pen.trace();
            let scale = if pen_tr > 0.0 && design_tr > 0.0 {
                design_tr / pen_tr
            } else {
                1.0
            };
            s.view_mut((off, off), (d, d)).copy_from(&(pen * scale));
            off += d;
        }

        let mean_diag = xtx.trace() / p as f64;
        let mut a = xtx;
        for i in 0..p {
            a[(i, i)] += 1e-10 * mean_diag;
        }
        let chol = linalg::cholesky(
            a,
            "scatter smoother design",
            "predictor values do not span the basis",
        )?;
        let l = chol.l();
        // M = L⁻¹ S L⁻ᵀ
        let linv_s = l
            .solve_lower_triangular(&s)
            .ok_or_else(|| Error::rank("scatter smoother design", "singular Cholesky factor"))?;
        let m = l
            .solve_lower_triangular(&linv_s.transpose())
            .ok_or_else(|| Error::rank("scatter smoother design", "singular Cholesky factor"))?;
        let m = (&m + m.transpose()) * 0.5;
        let eig = m.symmetric_eigen();
        let transform = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| Error::rank("scatter smoother design", "singular Cholesky factor"))?;
        let eigenvalues = eig.eigenvalues.map(|e| e.max(0.0));
        Ok(Self {
            predictor_dim: pd,
            terms,
            x,
            transform,
            eigenvalues,
            settings: settings.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_coefficients(&self) -> usize {
        self.x.ncols()
    }

    pub fn predictor_dim(&self) -> usize {
        self.predictor_dim
    }

    /// Fits responses `y` (`n × m`), choosing `λ` by GCV unless fixed.
    pub fn fit(&self, y: &DMatrix<f64>) -> Result<ScatterFit> {
        let n = self.n();
        if y.nrows() != n || y.ncols() == 0 {
            return Err(Error::invalid("response rows must match predictor rows"));
        }
        let p = self.n_coefficients();
        let xty = self.x.tr_mul(y);
        let z = self.transform.tr_mul(&xty);
        let yy = y.norm_squared();
        let zz = z.norm_squared();
        let z2: Vec<f64> = (0..p).map(|j| z.row(j).norm_squared()).collect();
        let nf = n as f64;
        let eig = &self.eigenvalues;
        let gcv_at = |lam: f64| -> (f64, f64) {
            let mut rss = yy - zz;
            let mut tr = 0.0;
            for j in 0..p {
                let s = 1.0 / (1.0 + lam * eig[j]);
                tr += s;
                rss += z2[j] * (1.0 - s) * (1.0 - s);
            }
            let rss = rss.max(0.0);
            let denom = (nf - tr).max(1e-8);
            (nf * rss / (denom * denom), tr)
        };

        let lambda = match self.settings.lambda {
            Some(l) => {
                if !(l >= 0.0) {
                    return Err(Error::invalid("fixed smoothing weight must be nonnegative"));
                }
                l
            }
            None => {
                let (lo, hi) = self.settings.log10_lambda_range;
                let steps = ((hi - lo) / 0.5).ceil().max(1.0) as usize;
                let tol = |g: f64| g * 1e-10 + 1e-15 * yy / nf;
                // scan from the smoothest end; ties keep the smoother fit
                let mut best = (hi, gcv_at(10f64.powf(hi)).0);
                for i in (0..steps).rev() {
                    let ll = lo + (hi - lo) * i as f64 / steps as f64;
                    let g = gcv_at(10f64.powf(ll)).0;
                    if g < best.1 - tol(best.1) {
                        best = (ll, g);
                    }
                }
                // golden-section refinement within one grid step
                let h = (hi - lo) / steps as f64;
                let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
                let gr = 0.5 * (5f64.sqrt() - 1.0);
                let mut c = b - gr * (b - a);
                let mut d = a + gr * (b - a);
                let mut gc = gcv_at(10f64.powf(c)).0;
                let mut gd = gcv_at(10f64.powf(d)).0;
                for _ in 0..50 {
                    if gc < gd {
                        b = d;
                        d = c;
                        gd = gc;
                        c = b - gr * (b - a);
                        gc = gcv_at(10f64.powf(c)).0;
                    } else {
                        a = c;
                        c = d;
                        gc = gd;
                        d = a + gr * (b - a);
                        gd = gcv_at(10f64.powf(d)).0;
                    }
                }
                let (cand, gcand) = if gc < gd { (c, gc) } else { (d, gd) };
                if gcand < best.1 - tol(best.1) {
                    best = (cand, gcand);
                }
                10f64.powf(best.0)
            }
        };

        let mut zs = z;
        let mut edf = 0.0;
        for j in 0..p {
            let s = 1.0 / (1.0 + lambda * eig[j]);
            edf += s;
            zs.row_mut(j).scale_mut(s);
        }
        let coefficients = &self.transform * zs;
        let fitted = &self.x * &coefficients;
        let rss = (y - &fitted).norm_squared();
        let denom = (nf - edf).max(1e-8);
        Ok(ScatterFit {
            coefficients,
            fitted,
            edf,
            lambda,
            gcv: nf * rss / (denom * denom),
        })
    }

    /// Evaluates a fit at new predictor vectors (rows of `points`).
    pub fn predict(
        &self,
        coefficients: &DMatrix<f64>,
        points: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        if points.ncols() != self.predictor_dim {
            return Err(Error::invalid(format!(
                "expected {} predictor columns, got {}",
                self.predictor_dim,
                points.ncols()
            )));
        }
        let p = self.n_coefficients();
        let m = coefficients.ncols();
        let mut out = DMatrix::<f64>::zeros(points.nrows(), m);
        let mut raw = vec![0.0; self.terms.iter().map(Term::raw_dim).max().unwrap_or(0)];
        let mut buf = vec![0.0; raw.len()];
        let mut row = vec![0.0; p];
        let mut point = vec![0.0; self.predictor_dim];
        for r in 0..points.nrows() {
            for c in 0..self.predictor_dim {
                point[c] = points[(r, c)];
            }
            row[0] = 1.0;
            let mut off = 1;
            for t in &self.terms {
                let d = t.dim();
                t.row(&point, &mut raw[..d + 1], &mut buf[..d]);
                row[off..off + d].copy_from_slice(&buf[..d]);
                off += d;
            }
            for c in 0..m {
                out[(r, c)] = (0..p).map(|j| row[j] * coefficients[(j, c)]).sum();
            }
        }
        Ok(out)
    }
}

/// A fitted nonparametric regression `ĥ` from predictor vectors to
/// responses.
#[derive(Debug, Clone)]
pub struct ScatterSmoother {
    design: PreparedDesign,
    fit: ScatterFit,
}

impl ScatterSmoother {
    pub fn from_parts(design: PreparedDesign, fit: ScatterFit) -> Self {
        Self { design, fit }
    }

    pub fn predictor_dim(&self) -> usize {
        self.design.predictor_dim()
    }

    pub fn edf(&self) -> f64 {
        self.fit.edf
    }

    pub fn lambda(&self) -> f64 {
        self.fit.lambda
    }

    /// Predictions at the training points.
    pub fn fitted(&self) -> &DMatrix<f64> {
        &self.fit.fitted
    }

    pub fn predict(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.design.predict(&self.fit.coefficients, points)
    }
}

/// Fits an additive (default) or tensor-product penalised spline regression
/// of `responses` (`n × m`) on `predictors` (`n × p`), with the smoothing
/// weight chosen by generalised cross-validation.
pub fn fit_scatter_smoother(
    predictors: &DMatrix<f64>,
    responses: &DMatrix<f64>,
    settings: &ScatterSettings,
) -> Result<ScatterSmoother> {
    if predictors.nrows() != responses.nrows() {
        return Err(Error::invalid("predictor and response counts differ"));
    }
    let design = match settings.structure {
        Structure::Additive => PreparedDesign::new(predictors, settings, None)?,
        Structure::TensorProduct => {
            PreparedDesign::with_dims(predictors, settings, &[settings.tensor_dim], None)?
        }
    };
    let fit = design.fit(responses)?;
    Ok(ScatterSmoother { design, fit })
}
