//! Resampling tests that classify a model's lack of fit from the estimated
//! forcing function: a case-2 test for dependence on the state and a case-3
//! test for additional dependence on lagged forcing.

mod config;
mod pipeline;
mod resample;
mod runner;
mod stat;
mod statistic;

pub use config::{grid_spacing, ResolvedTestConfig, TestConfig};
pub use pipeline::{Pipeline, PipelineFit, PipelineSettings};
pub use resample::{
    block_permute, block_permute_with, blocks_in_order, residual_bootstrap_resample, residuals,
};
pub use runner::{
    case2_test, case3_test, Decision, DiagnosticReport, FailedReplicate, ReplicateRecord, TestKind,
    TestRunner,
};
pub use stat::{f_stat_case2, f_stat_case3, FStat};
pub use statistic::{
    case2_permutation_test, case3_null_data, case3_permutation_test, fit_case2, fit_case3,
    permutation_p_value, Case2Fit, Case3Fit, Observed,
};
