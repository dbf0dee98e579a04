//! Smoother fits, F-statistics and permutation p-values on trimmed vectors
//! of state and forcing values. The runner feeds these from pipeline fits;
//! they can also be driven directly with synthetic inputs.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::resample::block_permute_with;
use super::stat::{f_stat_case2, f_stat_case3, FStat};
use crate::rng::rng_from_seed;
use crate::splines::{PreparedDesign, ScatterSettings, ScatterSmoother, Structure, TermSpec};
use crate::{Error, Result};

/// Statistic and smoother sizes for one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub f: FStat,
    /// EDF of `ĥ` (case 2) or of `ĥ₀` then `ĥ₁` (case 3).
    pub edf: Vec<f64>,
}

/// Permutation p-value with the `+1` correction: the observed statistic
/// counts as one of the permutations.
pub fn permutation_p_value(f0: FStat, permuted: &[FStat]) -> f64 {
    let f0 = f0.value();
    let hits = permuted.iter().filter(|f| f.value() >= f0).count();
    (1 + hits) as f64 / (permuted.len() + 1) as f64
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn check_inputs(x: &DMatrix<f64>, g: &[f64]) -> Result<()> {
    if x.nrows() != g.len() {
        return Err(Error::invalid(
            "state rows and forcing values differ in length",
        ));
    }
    if x.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(Error::invalid("statistic inputs must be finite"));
    }
    Ok(())
}

/// Smooth terms over the `d` state coordinates.
fn state_terms(settings: &ScatterSettings, d: usize, n: usize) -> Vec<TermSpec> {
    match settings.structure {
        Structure::Additive => settings
            .additive_dims(d, n)
            .into_iter()
            .enumerate()
            .map(|(c, k)| TermSpec::new(vec![c], k))
            .collect(),
        Structure::TensorProduct => vec![TermSpec::new((0..d).collect(), settings.tensor_dim)],
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
        (a.min(x), b.max(x))
    })
}

/// Case-2 fit `ĥ(x̂)` to `ĝ`.
#[derive(Debug, Clone)]
pub struct Case2Fit {
    pub observed: Observed,
    pub h: ScatterSmoother,
}

impl Case2Fit {
    /// `ĥ` at the training points.
    pub fn fitted(&self) -> Vec<f64> {
        self.h.fitted().as_slice().to_vec()
    }
}

fn case2_design(x: &DMatrix<f64>, settings: &ScatterSettings) -> Result<PreparedDesign> {
    let terms = state_terms(settings, x.ncols(), x.nrows());
    PreparedDesign::with_terms(x, settings, &terms, None)
}

fn case2_stat(design: &PreparedDesign, g: &[f64]) -> Result<(FStat, crate::splines::ScatterFit)> {
    let fit = design.fit(&column(g))?;
    let f = f_stat_case2(g, fit.fitted.as_slice(), 1)?;
    Ok((f, fit))
}

/// Fits `ĥ` to `g` on the state rows `x` (`K × d`) and computes the case-2 F.
pub fn fit_case2(x: &DMatrix<f64>, g: &[f64], settings: &ScatterSettings) -> Result<Case2Fit> {
    check_inputs(x, g)?;
    let design = case2_design(x, settings)?;
    let (f, fit) = case2_stat(&design, g)?;
    Ok(Case2Fit {
        observed: Observed {
            f,
            edf: vec![fit.edf],
        },
        h: ScatterSmoother::from_parts(design, fit),
    })
}

/// Case-2 statistic and its block-permutation p-value. Permutation `k` uses
/// a generator seeded with `seed(k)`.
pub fn case2_permutation_test(
    x: &DMatrix<f64>,
    g: &[f64],
    settings: &ScatterSettings,
    block_len: usize,
    permutations: usize,
    seed: &dyn Fn(usize) -> u64,
) -> Result<(Observed, f64)> {
    check_inputs(x, g)?;
    let design = case2_design(x, settings)?;
    let (f0, fit) = case2_stat(&design, g)?;
    let k = g.len();
    let mut permuted = Vec::with_capacity(permutations);
    let mut gp = vec![0.0; k];
    for j in 0..permutations {
        let perm = block_permute_with(k, block_len, &mut rng_from_seed(seed(j)))?;
        for (dst, &src) in gp.iter_mut().zip(&perm) {
            *dst = g[src];
        }
        permuted.push(case2_stat(&design, &gp)?.0);
    }
    let p = permutation_p_value(f0, &permuted);
    Ok((
        Observed {
            f: f0,
            edf: vec![fit.edf],
        },
        p,
    ))
}

/// The null smoother `ĥ₀` for case 3, fitted on the points that have a
/// lagged partner but spanning the states of all points.
struct Case3Null {
    design: PreparedDesign,
    x_domains: Vec<(f64, f64)>,
    h1_terms: Vec<TermSpec>,
    lag: usize,
}

impl Case3Null {
    fn new(x: &DMatrix<f64>, settings: &ScatterSettings, lag: usize) -> Result<Self> {
        let (k, d) = x.shape();
        if lag == 0 || k < lag + 3 {
            return Err(Error::invalid(
                "lag must be positive and leave at least 3 statistic points",
            ));
        }
        let x_domains: Vec<_> = x.column_iter().map(|c| range(c.iter().copied())).collect();
        let x3 = x.rows(lag, k - lag).into_owned();
        let x_terms = state_terms(settings, d, k - lag);
        let design = PreparedDesign::with_terms(&x3, settings, &x_terms, Some(&x_domains))?;
        // ĥ₁ nests ĥ₀: the same state terms plus an additive lag term
        let mut h1_terms = x_terms;
        h1_terms.push(TermSpec::new(
            vec![d],
            settings.additive_dims(d + 1, k - lag)[d],
        ));
        Ok(Self {
            design,
            x_domains,
            h1_terms,
            lag,
        })
    }

    /// Fits both smoothers to `g` (all `K` trimmed values).
    fn fit(&self, x: &DMatrix<f64>, g: &[f64], settings: &ScatterSettings) -> Result<Case3Parts> {
        let (k, d) = x.shape();
        let lag = self.lag;
        let g3 = &g[lag..];
        let fit0 = self.design.fit(&column(g3))?;
        let h0_all = self
            .design
            .predict(&fit0.coefficients, x)?
            .as_slice()
            .to_vec();
        let mut x1 = DMatrix::zeros(k - lag, d + 1);
        x1.columns_mut(0, d).copy_from(&x.rows(lag, k - lag));
        for j in 0..k - lag {
            x1[(j, d)] = g[j];
        }
        let mut domains = self.x_domains.clone();
        domains.push(range(g[..k - lag].iter().copied()));
        let design1 = PreparedDesign::with_terms(&x1, settings, &self.h1_terms, Some(&domains))?;
        let fit1 = design1.fit(&column(g3))?;
        let f = f_stat_case3(g3, fit0.fitted.as_slice(), fit1.fitted.as_slice(), 1)?;
        Ok(Case3Parts {
            f,
            fit0,
            h0_all,
            design1,
            fit1,
        })
    }
}

struct Case3Parts {
    f: FStat,
    fit0: crate::splines::ScatterFit,
    h0_all: Vec<f64>,
    design1: PreparedDesign,
    fit1: crate::splines::ScatterFit,
}

impl Case3Parts {
    fn observed(&self) -> Observed {
        Observed {
            f: self.f,
            edf: vec![self.fit0.edf, self.fit1.edf],
        }
    }
}

/// Case-3 fits: `ĥ₀(x̂)` and `ĥ₁(x̂, ĝ(t − δ))` on the points `lag..K`.
#[derive(Debug, Clone)]
pub struct Case3Fit {
    pub observed: Observed,
    pub lag: usize,
    /// `ĥ₀` at every one of the `K` points.
    pub h0_all: Vec<f64>,
    pub h0: ScatterSmoother,
    /// Predictors are the state coordinates followed by lagged `ĝ`.
    pub h1: ScatterSmoother,
}

impl Case3Fit {
    /// Null residuals `η = ĝ − ĥ₀(x̂)` at all `K` points.
    pub fn null_residuals(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.h0_all).map(|(a, b)| a - b).collect()
    }
}

/// Fits `ĥ₀` and `ĥ₁` to `g` with the lag given in samples.
pub fn fit_case3(
    x: &DMatrix<f64>,
    g: &[f64],
    settings: &ScatterSettings,
    lag: usize,
) -> Result<Case3Fit> {
    check_inputs(x, g)?;
    let null = Case3Null::new(x, settings, lag)?;
    let parts = null.fit(x, g, settings)?;
    Ok(Case3Fit {
        observed: parts.observed(),
        lag,
        h0_all: parts.h0_all,
        h0: ScatterSmoother::from_parts(null.design, parts.fit0),
        h1: ScatterSmoother::from_parts(parts.design1, parts.fit1),
    })
}

/// A null data set for case 3: block-permuted null residuals added back to
/// `ĥ₀`, `ĝᵏ_j = ĥ₀_j + η_{perm[j]}`.
pub fn case3_null_data(g: &[f64], h0_all: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter()
        .zip(h0_all)
        .map(|(&src, h)| h + (g[src] - h0_all[src]))
        .collect()
}

/// Case-3 statistic and its p-value over null data sets built by permuting
/// `ĥ₀` residuals. Permutation `k` uses a generator seeded with `seed(k)`.
pub fn case3_permutation_test(
    x: &DMatrix<f64>,
    g: &[f64],
    settings: &ScatterSettings,
    lag: usize,
    block_len: usize,
    permutations: usize,
    seed: &dyn Fn(usize) -> u64,
) -> Result<(Observed, f64)> {
    check_inputs(x, g)?;
    let null = Case3Null::new(x, settings, lag)?;
    let parts = null.fit(x, g, settings)?;
    let k = g.len();
    let mut permuted = Vec::with_capacity(permutations);
    for j in 0..permutations {
        let perm = block_permute_with(k, block_len, &mut rng_from_seed(seed(j)))?;
        let gk = case3_null_data(g, &parts.h0_all, &perm);
        permuted.push(null.fit(x, &gk, settings)?.f);
    }
    let p = permutation_p_value(parts.f, &permuted);
    Ok((parts.observed(), p))
}
