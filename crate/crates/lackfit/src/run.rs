//! Data generation and end-to-end diagnosis of one data set.

use std::path::Path;

use lackfit_core::diagnose::{
    DiagnosticReport, Pipeline, PipelineFit, ReplicateRecord, TestKind, TestRunner,
};
use lackfit_core::dynsys::{
    integrate, observe, simulate_sde, uniform_grid, TimeSeries, Trajectory,
};
use lackfit_core::rng::{derive_seed, stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Generator};
use crate::error::AppError;

/// Seeds of replicate `r`: simulation noise, observation noise and the
/// master seed of its resampling tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    pub replicate: usize,
    pub simulate: u64,
    pub observe: u64,
    pub test: u64,
}

impl ReplicateSeeds {
    pub fn new(master: u64, replicate: usize) -> Self {
        let r = replicate as u64;
        Self {
            replicate,
            simulate: derive_seed(master, &[stream::SIMULATE, r]),
            observe: derive_seed(master, &[stream::OBSERVE, r]),
            test: derive_seed(master, &[r]),
        }
    }
}

/// Simulated path and its noisy observations.
#[derive(Debug, Clone)]
pub struct Generated {
    pub truth: Trajectory,
    pub observations: TimeSeries,
}

/// Generates one replicate from a resolved config with a builtin source.
pub fn generate(cfg: &ExperimentConfig, seeds: &ReplicateSeeds) -> Result<Generated, AppError> {
    let b = cfg
        .source_system()
        .ok_or_else(|| AppError::Config("data generation needs data.system".into()))?;
    let d = &cfg.data;
    let grid = uniform_grid(d.t_start.unwrap(), d.t_end.unwrap(), d.n_points.unwrap())?;
    let theta = d.theta.as_ref().unwrap();
    let x0 = d.x0.as_ref().unwrap();
    let truth = match d.generator.unwrap_or_default() {
        Generator::Ode => integrate(
            &b.system.clone().with_rate_scale(d.ode_speedup.unwrap()),
            theta,
            x0,
            &grid,
            None,
            d.ode_substep.unwrap(),
        )?,
        Generator::Sde => simulate_sde(
            &b.system,
            theta,
            d.sde_sigma2.as_ref().unwrap(),
            x0,
            &grid,
            d.sde_step.unwrap(),
            seeds.simulate,
        )?,
    };
    let observations = observe(
        &truth,
        d.obs_noise_var.as_ref().unwrap(),
        &b.system.observed,
        seeds.observe,
    )?;
    Ok(Generated {
        truth,
        observations,
    })
}

/// Everything needed to audit or re-run one diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seeds: ReplicateSeeds,
    /// Observations file, relative to the report.
    pub data_file: String,
    pub fit: PipelineFit,
    pub case2: Option<DiagnosticReport>,
    pub case3: Option<DiagnosticReport>,
    /// Tests that could not be completed.
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn pipeline_for(cfg: &ExperimentConfig, times: &[f64]) -> Result<Pipeline, AppError> {
    Ok(Pipeline::new(
        cfg.model_system(),
        cfg.pipeline_settings(),
        times,
    )?)
}

/// Runs the requested tests with bootstrap replicates spread over the
/// current rayon pool. Replicate seeds do not depend on scheduling, so the
/// reports are identical for any number of threads.
pub fn run_tests(
    runner: &TestRunner,
    kinds: &[TestKind],
) -> Vec<lackfit_core::Result<DiagnosticReport>> {
    let observed: Vec<_> = kinds.iter().map(|&k| runner.observed(k)).collect();
    let b1 = runner.config().b1;
    let per_replicate: Vec<Vec<lackfit_core::Result<ReplicateRecord>>> = (0..b1)
        .into_par_iter()
        .map(|b| runner.replicate(b, kinds))
        .collect();
    let mut per_kind: Vec<Vec<(usize, lackfit_core::Result<ReplicateRecord>)>> =
        kinds.iter().map(|_| Vec::new()).collect();
    for (b, outs) in per_replicate.into_iter().enumerate() {
        for (slot, r) in per_kind.iter_mut().zip(outs) {
            slot.push((b, r));
        }
    }
    kinds
        .iter()
        .zip(observed)
        .zip(per_kind)
        .map(|((&k, obs), outs)| runner.assemble(k, obs?, outs))
        .collect()
}

/// Fits the pipeline to `data` and runs both tests. A test that cannot be
/// completed is left out of the report and its error returned alongside.
pub fn diagnose_series(
    cfg: &ExperimentConfig,
    data: &TimeSeries,
    seeds: ReplicateSeeds,
    data_file: &str,
) -> Result<(RunReport, Vec<lackfit_core::Error>), AppError> {
    let pipeline = pipeline_for(cfg, data.times())?;
    let mut test = cfg.test.clone();
    test.master_seed = seeds.test;
    let runner = TestRunner::new(&pipeline, data, &test)?;
    let kinds = [TestKind::Case2, TestKind::Case3];
    let mut reports = run_tests(&runner, &kinds).into_iter();
    let mut errors = Vec::new();
    let mut failures = Vec::new();
    let mut take = |kind: &str, r: lackfit_core::Result<DiagnosticReport>| match r {
        Ok(rep) => Some(rep),
        Err(e) => {
            errors.push(format!("{kind}: {e}"));
            failures.push(e);
            None
        }
    };
    let case2 = take("case2", reports.next().unwrap());
    let case3 = take("case3", reports.next().unwrap());
    let report = RunReport {
        config: cfg.clone(),
        seeds,
        data_file: data_file.to_string(),
        fit: runner.original_fit().clone(),
        case2,
        case3,
        errors,
    };
    Ok((report, failures))
}

/// Runs `f` on a pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, AppError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(AppError::Config("--jobs must be positive".into()));
        }
        b = b.num_threads(j);
    }
    let pool = b
        .build()
        .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
