//! B-spline bases, penalised smoothing of time series, and additive
//! penalised-spline scatter smoothers.

mod bspline;
mod scatter;
mod smooth;

pub use bspline::{BSplineBasis, NonzeroBasis, SplineFunction, MAX_DERIV, MAX_ORDER};
pub use scatter::{
    fit_scatter_smoother, PreparedDesign, ScatterFit, ScatterSettings, ScatterSmoother, Structure,
    TermSpec,
};
pub use smooth::{smooth_timeseries, PenalizedSmoother};
