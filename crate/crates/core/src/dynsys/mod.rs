//! Parameterised dynamical systems, deterministic and stochastic simulation,
//! and the Gaussian observation model.

mod builtin;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::splines::SplineFunction;
use crate::{Error, Result};

pub use builtin::{builtin_system, Builtin, ExperimentDefaults, ModelOrder, BUILTIN_NAMES};

/// States with any coordinate beyond this magnitude are treated as divergent.
pub const ADMISSIBLE_BOUND: f64 = 1e8;

/// Default internal step for both RK4 substeps and Euler–Maruyama.
pub const DEFAULT_STEP: f64 = 1e-3;

const MAX_PARAMS: usize = 32;

/// `out = f(x; t, θ)`.
pub type RateFn = fn(x: &[f64], t: f64, theta: &[f64], out: &mut [f64]);

/// How an empirical forcing value enters the rate function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ForcingSpec {
    None,
    /// `dx/dt = f(x; θ) + g(t) e_target`.
    Additive {
        target: usize,
    },
    /// `dx/dt = f(x; θ[param ← g(t)])`; `nominal` is the value the parameter
    /// is held at while the remaining parameters are estimated.
    ParameterReplacement {
        param: usize,
        nominal: f64,
    },
}

#[derive(Debug, Clone)]
pub struct DynamicalSystem {
    pub name: String,
    pub dim: usize,
    pub param_names: Vec<String>,
    pub rate: RateFn,
    pub linear_in_params: bool,
    pub forcing: ForcingSpec,
    /// Zero-based indices of the measured coordinates.
    pub observed: Vec<usize>,
    /// Multiplies the whole right-hand side.
    pub rate_scale: f64,
}

impl DynamicalSystem {
    pub fn param_dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == name)
    }

    /// Returns a copy with a different forcing spec after validating it.
    pub fn with_forcing(mut self, forcing: ForcingSpec) -> Result<Self> {
        self.forcing = forcing;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rate_scale(mut self, scale: f64) -> Self {
        self.rate_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.param_dim() == 0 {
            return Err(Error::invalid(
                "system dimension and parameter count must be positive",
            ));
        }
        if self.param_dim() > MAX_PARAMS {
            return Err(Error::invalid(format!(
                "at most {MAX_PARAMS} parameters are supported"
            )));
        }
        match self.forcing {
            ForcingSpec::Additive { target } if target >= self.dim => {
                return Err(Error::invalid(format!(
                    "additive forcing target x{} outside 1..={}",
                    target + 1,
                    self.dim
                )))
            }
            ForcingSpec::ParameterReplacement { param, .. } if param >= self.param_dim() => {
                return Err(Error::invalid(format!(
                    "replacement target #{param} is not a parameter of {}",
                    self.name
                )))
            }
            _ => {}
        }
        if self.observed.is_empty() || self.observed.iter().any(|&i| i >= self.dim) {
            return Err(Error::invalid(
                "observed indices must be a nonempty subset of the state",
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn rate(&self, x: &[f64], t: f64, theta: &[f64], out: &mut [f64]) {
        (self.rate)(x, t, theta, out);
        if self.rate_scale != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.rate_scale);
        }
    }

    /// Rate with a forcing value injected according to [`ForcingSpec`].
    pub fn forced_rate(&self, x: &[f64], t: f64, theta: &[f64], g: &[f64], out: &mut [f64]) {
        match self.forcing {
            ForcingSpec::None => self.rate(x, t, theta, out),
            ForcingSpec::Additive { target } => {
                self.rate(x, t, theta, out);
                out[target] += g[0];
            }
            ForcingSpec::ParameterReplacement { param, .. } => {
                let mut buf = [0.0; MAX_PARAMS];
                let th = &mut buf[..theta.len()];
                th.copy_from_slice(theta);
                th[param] = g[0];
                self.rate(x, t, th, out);
            }
        }
    }

    /// Largest violation of `f(αθ₁+(1−α)θ₂) = αf(θ₁)+(1−α)f(θ₂)` at one point.
    pub fn affine_defect(&self, x: &[f64], t: f64, th1: &[f64], th2: &[f64], alpha: f64) -> f64 {
        let mix: Vec<f64> = th1
            .iter()
            .zip(th2)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        let (mut f1, mut f2, mut fm) = (
            vec![0.0; self.dim],
            vec![0.0; self.dim],
            vec![0.0; self.dim],
        );
        self.rate(x, t, th1, &mut f1);
        self.rate(x, t, th2, &mut f2);
        self.rate(x, t, &mix, &mut fm);
        (0..self.dim)
            .map(|i| (fm[i] - alpha * f1[i] - (1.0 - alpha) * f2[i]).abs())
            .fold(0.0, f64::max)
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "time grid must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// Row-major samples of a vector-valued signal on a strictly increasing grid.
macro_rules! sampled_type {
    ($(#[$m:meta])* $name:ident, $field:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            times: Vec<f64>,
            dim: usize,
            $field: Vec<f64>,
        }

        impl $name {
            pub fn new(times: Vec<f64>, dim: usize, $field: Vec<f64>) -> Result<Self> {
                validate_grid(&times)?;
                if dim == 0 || $field.len() != times.len() * dim {
                    return Err(Error::invalid(format!(
                        "expected {} x {dim} values, got {}",
                        times.len(),
                        $field.len()
                    )));
                }
                if $field.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("values must be finite"));
                }
                Ok(Self { times, dim, $field })
            }

            pub fn times(&self) -> &[f64] {
                &self.times
            }

            pub fn dim(&self) -> usize {
                self.dim
            }

            pub fn len(&self) -> usize {
                self.times.len()
            }

            pub fn is_empty(&self) -> bool {
                self.times.is_empty()
            }

            pub fn row(&self, i: usize) -> &[f64] {
                &self.$field[i * self.dim..(i + 1) * self.dim]
            }

            pub fn $field(&self) -> &[f64] {
                &self.$field
            }

            pub fn column(&self, j: usize) -> Vec<f64> {
                (0..self.len()).map(|i| self.$field[i * self.dim + j]).collect()
            }
        }
    };
}

sampled_type!(
    /// A simulated state path.
    Trajectory,
    states
);
sampled_type!(
    /// Observations `y_i` at times `t_i`; columns follow the observed indices.
    TimeSeries,
    values
);

impl TimeSeries {
    /// Replaces the values, keeping the time grid.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.times.clone(), self.dim, values)
    }
}

fn check_state(x: &[f64], t: f64) -> Result<()> {
    if x.iter()
        .all(|v| v.is_finite() && v.abs() <= ADMISSIBLE_BOUND)
    {
        Ok(())
    } else {
        Err(Error::IntegrationBlowup { time: t })
    }
}

fn check_inputs(system: &DynamicalSystem, theta: &[f64], x0: &[f64], grid: &[f64]) -> Result<()> {
    system.validate()?;
    validate_grid(grid)?;
    if theta.len() != system.param_dim() {
        return Err(Error::invalid(format!(
            "{} expects {} parameters, got {}",
            system.name,
            system.param_dim(),
            theta.len()
        )));
    }
    if x0.len() != system.dim || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "initial state must be finite with the system dimension",
        ));
    }
    Ok(())
}

/// Number of equal substeps covering `dt` with steps no longer than `h`.
fn substeps(dt: f64, h: f64) -> usize {
    let r = dt / h;
    (r - 1e-9 * r.max(1.0)).ceil().max(1.0) as usize
}

/// Classical fourth-order Runge–Kutta solution sampled at `grid`.
///
/// Each grid interval is split into equal substeps no longer than `substep`
/// (and never longer than the interval itself). With `forcing`, the spline
/// value at every stage time is injected according to `system.forcing`.
pub fn integrate(
    system: &DynamicalSystem,
    theta: &[f64],
    x0: &[f64],
    grid: &[f64],
    forcing: Option<&SplineFunction>,
    substep: f64,
) -> Result<Trajectory> {
    check_inputs(system, theta, x0, grid)?;
    if !(substep > 0.0) {
        return Err(Error::invalid("substep must be positive"));
    }
    if let Some(g) = forcing {
        if system.forcing == ForcingSpec::None {
            return Err(Error::invalid("a forcing function needs a forcing spec"));
        }
        let (a, b) = g.domain();
        let tol = 1e-9 * (b - a).abs().max(1.0);
        if grid[0] < a - tol || grid[grid.len() - 1] > b + tol {
            return Err(Error::invalid(
                "forcing function does not cover the time grid",
            ));
        }
    }
    let d = system.dim;
    let m = forcing.map_or(1, |g| g.outputs());
    let mut gval = vec![0.0; m];
    let mut eval = |x: &[f64], t: f64, out: &mut [f64]| match forcing {
        Some(g) => {
            g.eval_into(t, 0, &mut gval);
            system.forced_rate(x, t, theta, &gval, out);
        }
        None => system.rate(x, t, theta, out),
    };

    let mut x = x0.to_vec();
    check_state(&x, grid[0])?;
    let mut states = Vec::with_capacity(grid.len() * d);
    states.extend_from_slice(&x);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    for w in grid.windows(2) {
        let n = substeps(w[1] - w[0], substep);
        let h = (w[1] - w[0]) / n as f64;
        for s in 0..n {
            let t = w[0] + h * s as f64;
            eval(&x, t, &mut k1);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            eval(&tmp, t + 0.5 * h, &mut k2);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            eval(&tmp, t + 0.5 * h, &mut k3);
            for i in 0..d {
                tmp[i] = x[i] + h * k3[i];
            }
            eval(&tmp, t + h, &mut k4);
            for i in 0..d {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            check_state(&x, t + h)?;
        }
        states.extend_from_slice(&x);
    }
    Trajectory::new(grid.to_vec(), d, states)
}

/// Euler–Maruyama path of `dx = f(x; θ) dt + σ dW`, returned at `grid`.
///
/// `sigma2` holds the per-coordinate diffusion variance (a single entry is
/// broadcast). Grid intervals that are not a multiple of `step` are split
/// into equal substeps no longer than `step`.
pub fn simulate_sde(
    system: &DynamicalSystem,
    theta: &[f64],
    sigma2: &[f64],
    x0: &[f64],
    grid: &[f64],
    step: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_inputs(system, theta, x0, grid)?;
    let d = system.dim;
    let sigma2 = broadcast(sigma2, d, "diffusion variance")?;
    if !(step > 0.0) {
        return Err(Error::invalid("Euler–Maruyama step must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = x0.to_vec();
    check_state(&x, grid[0])?;
    let mut states = Vec::with_capacity(grid.len() * d);
    states.extend_from_slice(&x);
    let mut f = vec![0.0; d];
    for w in grid.windows(2) {
        let n = substeps(w[1] - w[0], step);
        let h = (w[1] - w[0]) / n as f64;
        let scale: Vec<f64> = sigma2.iter().map(|s| (s * h).sqrt()).collect();
        for s in 0..n {
            let t = w[0] + h * s as f64;
            system.rate(&x, t, theta, &mut f);
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                x[i] += f[i] * h + scale[i] * z;
            }
            check_state(&x, t + h)?;
        }
        states.extend_from_slice(&x);
    }
    Trajectory::new(grid.to_vec(), d, states)
}

fn broadcast(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    let out = match v.len() {
        1 => vec![v[0]; n],
        k if k == n => v.to_vec(),
        k => {
            return Err(Error::invalid(format!(
                "{what} needs 1 or {n} entries, got {k}"
            )))
        }
    };
    if out.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!(
            "{what} must be finite and nonnegative"
        )));
    }
    Ok(out)
}

/// Adds independent Gaussian noise to the selected coordinates.
///
/// `noise_var` has one entry per observed coordinate, or a single entry that
/// is broadcast.
pub fn observe(
    traj: &Trajectory,
    noise_var: &[f64],
    observed: &[usize],
    seed: u64,
) -> Result<TimeSeries> {
    if observed.is_empty() {
        return Err(Error::invalid("observed index set is empty"));
    }
    if observed.iter().any(|&i| i >= traj.dim()) {
        return Err(Error::invalid("observed index outside the state dimension"));
    }
    let var = broadcast(noise_var, observed.len(), "observation noise variance")?;
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(traj.len() * observed.len());
    for i in 0..traj.len() {
        let row = traj.row(i);
        for (k, &j) in observed.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            values.push(row[j] + sd[k] * z);
        }
    }
    TimeSeries::new(traj.times().to_vec(), observed.len(), values)
}

/// `n` equally spaced points from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(end > start) {
        return Err(Error::invalid("a grid needs n >= 2 points and end > start"));
    }
    let h = (end - start) / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|i| start + h * i as f64).collect();
    g[n - 1] = end;
    Ok(g)
}
