use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynsys::{DynamicalSystem, ForcingSpec, ModelOrder, TimeSeries};
use crate::estimate::{
    estimate_additive_with, estimate_forcing, gradient_match, gradient_match_order2,
    AdditiveForcingDesign, FirstOrder, ForcingEstimate, GradientMatchFit, QuadGrid, SecondOrder,
    StateCurve,
};
use crate::splines::{BSplineBasis, PenalizedSmoother, ScatterSettings, SplineFunction};
use crate::{Error, Result};

/// Smoothing and estimation settings shared by every fit in a test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub state_knot_spacing: f64,
    pub state_lambda: f64,
    pub forcing_knot_spacing: f64,
    /// Ridge penalty on the forcing coefficients.
    pub forcing_lambda: f64,
    /// Trapezoid sub-intervals per observation interval.
    pub quad_per_interval: usize,
    pub model_order: ModelOrder,
    pub scatter: ScatterSettings,
    /// Gauss–Newton start for models that are nonlinear in θ.
    pub theta_init: Option<Vec<f64>>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            state_knot_spacing: 0.25,
            state_lambda: 0.01,
            forcing_knot_spacing: 1.0,
            forcing_lambda: 0.0,
            quad_per_interval: 4,
            model_order: ModelOrder::First,
            scatter: ScatterSettings::default(),
            theta_init: None,
        }
    }
}

/// smooth → gradient match → forcing, with everything that depends only on
/// the observation times built once.
#[derive(Debug, Clone)]
pub struct Pipeline {
    system: DynamicalSystem,
    settings: PipelineSettings,
    times: Vec<f64>,
    smoother: PenalizedSmoother,
    g_basis: BSplineBasis,
    quad: QuadGrid,
    forcing_design: Option<AdditiveForcingDesign>,
}

/// The fitted objects for one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub xhat: SplineFunction,
    pub order: ModelOrder,
    pub gradient: GradientMatchFit,
    pub forcing: ForcingEstimate,
}

impl PipelineFit {
    /// Evaluates `f` with the state curve matching the model order.
    pub fn with_curve<R>(&self, f: impl FnOnce(&dyn StateCurve) -> R) -> R {
        match self.order {
            ModelOrder::First => f(&FirstOrder(&self.xhat)),
            ModelOrder::Second => f(&SecondOrder(&self.xhat)),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.with_curve(|c| c.dim())
    }

    /// Model states `x̂(t)` at `times`, one row per time.
    pub fn states(&self, times: &[f64]) -> DMatrix<f64> {
        self.with_curve(|c| {
            let d = c.dim();
            let mut out = DMatrix::zeros(times.len(), d);
            let mut row = vec![0.0; d];
            for (i, &t) in times.iter().enumerate() {
                c.state(t, &mut row);
                for j in 0..d {
                    out[(i, j)] = row[j];
                }
            }
            out
        })
    }

    /// `ĝ(t)` at `times`.
    pub fn forcing_values(&self, times: &[f64]) -> Vec<f64> {
        let mut v = [0.0];
        times
            .iter()
            .map(|&t| {
                self.forcing.g.eval_into(t, 0, &mut v);
                v[0]
            })
            .collect()
    }
}

impl Pipeline {
    pub fn new(system: DynamicalSystem, settings: PipelineSettings, times: &[f64]) -> Result<Self> {
        system.validate()?;
        if times.len() < 2 {
            return Err(Error::invalid("need at least two observation times"));
        }
        if let ModelOrder::Second = settings.model_order {
            if system.dim != 2 || system.param_dim() != 5 {
                return Err(Error::invalid(
                    "second-order fitting uses the five-coefficient (x, dx/dt) family",
                ));
            }
        }
        if settings.quad_per_interval == 0 {
            return Err(Error::invalid("quad_per_interval must be positive"));
        }
        let domain = (times[0], times[times.len() - 1]);
        let state_basis = BSplineBasis::uniform(4, domain, settings.state_knot_spacing)?;
        let smoother = PenalizedSmoother::new(state_basis, times, settings.state_lambda)
            .map_err(|e| e.in_stage("smooth"))?;
        let g_basis = BSplineBasis::uniform(4, domain, settings.forcing_knot_spacing)?;
        let quad = QuadGrid::refine(times, settings.quad_per_interval)?;
        let forcing_design = match system.forcing {
            ForcingSpec::Additive { .. } => Some(
                AdditiveForcingDesign::new(&g_basis, &quad, settings.forcing_lambda)
                    .map_err(|e| e.in_stage("estimate_forcing"))?,
            ),
            ForcingSpec::ParameterReplacement { .. } => None,
            ForcingSpec::None => {
                return Err(Error::invalid(
                    "the fitted model needs a forcing injection point",
                ))
            }
        };
        Ok(Self {
            system,
            settings,
            times: times.to_vec(),
            smoother,
            g_basis,
            quad,
            forcing_design,
        })
    }

    pub fn system(&self) -> &DynamicalSystem {
        &self.system
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn forcing_basis(&self) -> &BSplineBasis {
        &self.g_basis
    }

    pub fn quad(&self) -> &QuadGrid {
        &self.quad
    }

    /// Number of data columns the pipeline expects.
    pub fn data_dim(&self) -> usize {
        match self.settings.model_order {
            ModelOrder::First => self.system.dim,
            ModelOrder::Second => 1,
        }
    }

    pub fn fit(&self, data: &TimeSeries) -> Result<PipelineFit> {
        if data.times().len() != self.times.len()
            || data
                .times()
                .iter()
                .zip(&self.times)
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::invalid(
                "data times differ from the pipeline's observation grid",
            ));
        }
        if data.dim() != self.data_dim() {
            return Err(Error::invalid(format!(
                "data has {} value columns, model {} expects {}",
                data.dim(),
                self.system.name,
                self.data_dim()
            )));
        }
        let xhat = self
            .smoother
            .fit(data.values(), data.dim())
            .map_err(|e| e.in_stage("smooth"))?;
        let order = self.settings.model_order;
        let gradient = match order {
            ModelOrder::First => gradient_match(
                &FirstOrder(&xhat),
                &self.system,
                &self.quad,
                self.settings.theta_init.as_deref(),
            ),
            ModelOrder::Second => gradient_match_order2(&xhat, &self.quad),
        }
        .map_err(|e| e.in_stage("gradient_match"))?;
        let forcing = {
            let run = |curve: &dyn StateCurve| match &self.forcing_design {
                Some(design) => {
                    estimate_additive_with(curve, &gradient.theta, &self.system, design, &self.quad)
                }
                None => estimate_forcing(
                    curve,
                    &gradient.theta,
                    &self.system,
                    &self.g_basis,
                    self.settings.forcing_lambda,
                    &self.quad,
                ),
            };
            match order {
                ModelOrder::First => run(&FirstOrder(&xhat)),
                ModelOrder::Second => run(&SecondOrder(&xhat)),
            }
        }
        .map_err(|e| e.in_stage("estimate_forcing"))?;
        Ok(PipelineFit {
            xhat,
            order,
            gradient,
            forcing,
        })
    }
}
