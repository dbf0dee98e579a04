//! Benchmark systems with their default experiment settings.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use serde::{Deserialize, Serialize};

use super::{DynamicalSystem, ForcingSpec, RateFn, DEFAULT_STEP};
use crate::{Error, Result};

pub const BUILTIN_NAMES: [&str; 6] = [
    "linear2d",
    "vanderpol",
    "vanderpol_order2",
    "rossler",
    "rossler_chaotic",
    "rosenzweig_macarthur_log",
];

/// Whether gradient matching fits first derivatives of the observed state or
/// second derivatives of a single observed coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    First,
    Second,
}

/// Default data-generation and fitting settings for a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDefaults {
    pub n_points: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Observation noise variance per observed coordinate.
    pub obs_noise_var: f64,
    /// Diffusion variance per coordinate for the SDE generator.
    pub sde_sigma2: f64,
    pub sde_step: f64,
    /// Right-hand-side multiplier applied only when generating ODE data.
    pub ode_speedup: f64,
    pub state_knot_spacing: f64,
    pub state_lambda: f64,
    pub forcing_knot_spacing: f64,
    pub forcing_lambda: f64,
    /// Builtin model fitted to data from this system.
    pub fit_model: String,
    pub model_order: ModelOrder,
}

impl ExperimentDefaults {
    fn standard_grid(obs_noise_var: f64, sde_sigma2: f64) -> Self {
        Self {
            n_points: 440,
            t_start: 0.0,
            t_end: 55.0,
            obs_noise_var,
            sde_sigma2,
            sde_step: DEFAULT_STEP,
            ode_speedup: 1.0,
            state_knot_spacing: 0.25,
            state_lambda: 0.01,
            forcing_knot_spacing: 1.0,
            forcing_lambda: 0.0,
            fit_model: "linear2d".to_string(),
            model_order: ModelOrder::First,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Builtin {
    pub system: DynamicalSystem,
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
    pub defaults: ExperimentDefaults,
}

fn linear2d(x: &[f64], _t: f64, th: &[f64], out: &mut [f64]) {
    out[0] = th[0] * x[0] + th[1] * x[1];
    out[1] = th[2] * x[0] + th[3] * x[1];
}

fn vanderpol(x: &[f64], _t: f64, th: &[f64], out: &mut [f64]) {
    out[0] = th[0] * x[1];
    out[1] = th[1] * (x[1] - x[0] - x[1] * x[1] * x[1] / 3.0);
}

/// Second-order model `x'' = a + b x' + c x + d x² + e x (x')²` written as a
/// first-order system in `(x, x')`.
fn vanderpol_order2(x: &[f64], _t: f64, th: &[f64], out: &mut [f64]) {
    let (p, v) = (x[0], x[1]);
    out[0] = v;
    out[1] = th[0] + th[1] * v + th[2] * p + th[3] * p * p + th[4] * p * v * v;
}

fn rossler(x: &[f64], _t: f64, th: &[f64], out: &mut [f64]) {
    out[0] = -x[1] - x[2];
    out[1] = x[0] + th[0] * x[1];
    out[2] = th[1] + x[2] * (x[0] - th[2]);
}

/// Rosenzweig–MacArthur predator–prey model in `(log C, log B)`.
/// Parameters: `r, K_C, G, K_B, χ_B, δ, p`.
fn rosenzweig_macarthur_log(x: &[f64], _t: f64, th: &[f64], out: &mut [f64]) {
    let (c, b) = (x[0].exp(), x[1].exp());
    let (r, kc, g, kb, chi, delta, p) = (th[0], th[1], th[2], th[3], th[4], th[5], th[6]);
    let denom = kb + p * c;
    out[0] = r * (1.0 - c / kc) - p * g * b / denom;
    out[1] = chi * p * g * c / denom - delta;
}

fn system(
    name: &str,
    dim: usize,
    params: &[&str],
    rate: RateFn,
    linear_in_params: bool,
    forcing: ForcingSpec,
    observed: Vec<usize>,
) -> DynamicalSystem {
    DynamicalSystem {
        name: name.to_string(),
        dim,
        param_names: params.iter().map(|p| p.to_string()).collect(),
        rate,
        linear_in_params,
        forcing,
        observed,
        rate_scale: 1.0,
    }
}

/// Looks up a benchmark system by name.
///
/// Initial states are not part of the published setups; the defaults here
/// start each system on or near its attractor.
pub fn builtin_system(name: &str) -> Result<Builtin> {
    let additive_x2 = ForcingSpec::Additive { target: 1 };
    let b = match name {
        "linear2d" => Builtin {
            system: system(
                "linear2d",
                2,
                &["a11", "a12", "a21", "a22"],
                linear2d,
                true,
                additive_x2,
                vec![0, 1],
            ),
            theta: vec![0.0, -1.0, 1.0, 0.0],
            x0: vec![1.0, 0.0],
            defaults: ExperimentDefaults::standard_grid(0.25, 0.01),
        },
        "vanderpol" => Builtin {
            system: system(
                "vanderpol",
                2,
                &["a", "b"],
                vanderpol,
                true,
                additive_x2,
                vec![0, 1],
            ),
            theta: vec![0.25, 4.0],
            x0: vec![1.0, 0.0],
            defaults: ExperimentDefaults::standard_grid(0.001, 0.01),
        },
        "vanderpol_order2" => Builtin {
            system: system(
                "vanderpol_order2",
                2,
                &["a", "b", "c", "d", "e"],
                vanderpol_order2,
                true,
                additive_x2,
                vec![0],
            ),
            theta: vec![0.0, 0.0, -1.0, 0.3, 0.0],
            x0: vec![1.0, 0.0],
            defaults: ExperimentDefaults {
                obs_noise_var: 0.01,
                fit_model: "vanderpol_order2".to_string(),
                model_order: ModelOrder::Second,
                ..ExperimentDefaults::standard_grid(0.01, 0.01)
            },
        },
        "rossler" | "rossler_chaotic" => {
            let chaotic = name == "rossler_chaotic";
            Builtin {
                system: system(
                    name,
                    3,
                    &["a", "b", "c"],
                    rossler,
                    true,
                    additive_x2,
                    vec![0, 1],
                ),
                theta: vec![0.2, 0.2, if chaotic { 5.7 } else { 3.0 }],
                x0: vec![1.0, 1.0, 0.0],
                defaults: ExperimentDefaults {
                    ode_speedup: if chaotic { 2.0 } else { 1.0 },
                    ..ExperimentDefaults::standard_grid(0.01, 0.004)
                },
            }
        }
        "rosenzweig_macarthur_log" => Builtin {
            system: system(
                name,
                2,
                &["r", "K_C", "G", "K_B", "chi_B", "delta", "p"],
                rosenzweig_macarthur_log,
                false,
                ForcingSpec::ParameterReplacement {
                    param: 6,
                    nominal: 1.0,
                },
                vec![0, 1],
            ),
            theta: vec![1.0, 10.0, 1.0, 2.0, 0.5, 0.3, 1.0],
            x0: vec![3.0_f64.ln(), 0.0],
            defaults: ExperimentDefaults {
                n_points: 201,
                t_end: 100.0,
                state_knot_spacing: 0.5,
                forcing_knot_spacing: 3.0,
                fit_model: name.to_string(),
                ..ExperimentDefaults::standard_grid(0.25, 0.01)
            },
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown system '{other}'; valid names: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(b)
}
