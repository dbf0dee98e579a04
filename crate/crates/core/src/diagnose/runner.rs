use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{ResolvedTestConfig, TestConfig};
use super::pipeline::{Pipeline, PipelineFit};
use super::resample::residual_bootstrap_resample;
use super::stat::FStat;
use super::statistic::{
    case2_permutation_test, case3_permutation_test, fit_case2, fit_case3, Observed,
};
use crate::dynsys::TimeSeries;
use crate::rng::{derive_seed, stream};
use crate::splines::ScatterSettings;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Is `ĝ` a function of the state?
    Case2,
    /// Does lagged `ĝ` add to the state as a predictor?
    Case3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Retain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub bootstrap_seed: u64,
    pub f0: FStat,
    pub p_value: f64,
    pub edf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub test_kind: TestKind,
    pub observed: Observed,
    pub replicates: Vec<ReplicateRecord>,
    pub failures: Vec<FailedReplicate>,
    pub mean_p_value: f64,
    pub decision: Decision,
    pub statistic_points: usize,
    pub config: ResolvedTestConfig,
}

impl DiagnosticReport {
    pub fn p_values(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.p_value).collect()
    }
}

/// Trimmed statistic inputs for one fitted data set.
struct Sample {
    /// States at the trimmed points, `K × d`.
    x: DMatrix<f64>,
    /// `ĝ` at the trimmed points.
    g: Vec<f64>,
}

/// Runs the resampling tests for one data set.
pub struct TestRunner<'a> {
    pipeline: &'a Pipeline,
    data: &'a TimeSeries,
    config: ResolvedTestConfig,
    original: PipelineFit,
    trimmed_times: Vec<f64>,
}

impl<'a> TestRunner<'a> {
    /// Fits the pipeline to `data` and resolves `config` against its grid.
    pub fn new(pipeline: &'a Pipeline, data: &'a TimeSeries, config: &TestConfig) -> Result<Self> {
        let config = config.resolve(pipeline.times(), pipeline.forcing_basis().support_width())?;
        let original = pipeline.fit(data)?;
        let n = pipeline.times().len();
        let trimmed_times = pipeline.times()[config.trim..n - config.trim].to_vec();
        Ok(Self {
            pipeline,
            data,
            config,
            original,
            trimmed_times,
        })
    }

    pub fn config(&self) -> &ResolvedTestConfig {
        &self.config
    }

    pub fn original_fit(&self) -> &PipelineFit {
        &self.original
    }

    pub fn pipeline(&self) -> &Pipeline {
        self.pipeline
    }

    /// Times entering the case-2 statistic.
    pub fn trimmed_times(&self) -> &[f64] {
        &self.trimmed_times
    }

    /// Times entering the case-3 statistic.
    pub fn case3_times(&self) -> &[f64] {
        &self.trimmed_times[self.config.lag..]
    }

    fn sample(&self, fit: &PipelineFit) -> Sample {
        Sample {
            x: fit.states(&self.trimmed_times),
            g: fit.forcing_values(&self.trimmed_times),
        }
    }

    fn scatter(&self) -> &ScatterSettings {
        &self.pipeline.settings().scatter
    }

    pub fn observed(&self, kind: TestKind) -> Result<Observed> {
        let s = self.sample(&self.original);
        Ok(match kind {
            TestKind::Case2 => fit_case2(&s.x, &s.g, self.scatter())?.observed,
            TestKind::Case3 => fit_case3(&s.x, &s.g, self.scatter(), self.config.lag)?.observed,
        })
    }

    /// Seed of permutation `k` in replicate `b`.
    pub fn permutation_seed(&self, kind: TestKind, b: usize, k: usize) -> u64 {
        let tag = match kind {
            TestKind::Case2 => stream::CASE2,
            TestKind::Case3 => stream::CASE3,
        };
        derive_seed(self.config.master_seed, &[tag, b as u64, k as u64])
    }

    pub fn bootstrap_seed(&self, b: usize) -> u64 {
        derive_seed(self.config.master_seed, &[stream::BOOTSTRAP, b as u64])
    }

    /// Bootstrap replicate `b` for each requested test, sharing the refit.
    pub fn replicate(&self, b: usize, kinds: &[TestKind]) -> Vec<Result<ReplicateRecord>> {
        let seed = self.bootstrap_seed(b);
        let boot = residual_bootstrap_resample(self.data, &self.original.xhat, seed)
            .and_then(|d| self.pipeline.fit(&d));
        let fit = match boot {
            Ok(f) => f,
            Err(e) => return kinds.iter().map(|_| Err(e.clone())).collect(),
        };
        let s = self.sample(&fit);
        kinds
            .iter()
            .map(|&kind| {
                let c = &self.config;
                let perm_seed = |k| self.permutation_seed(kind, b, k);
                let out = match kind {
                    TestKind::Case2 => case2_permutation_test(
                        &s.x,
                        &s.g,
                        self.scatter(),
                        c.block_len,
                        c.b2,
                        &perm_seed,
                    ),
                    TestKind::Case3 => case3_permutation_test(
                        &s.x,
                        &s.g,
                        self.scatter(),
                        c.lag,
                        c.block_len,
                        c.b2,
                        &perm_seed,
                    ),
                };
                out.map(|(obs, p)| ReplicateRecord {
                    index: b,
                    bootstrap_seed: seed,
                    f0: obs.f,
                    p_value: p,
                    edf: obs.edf,
                })
            })
            .collect()
    }

    /// Combines per-replicate outcomes (in replicate order) into a report,
    /// aborting if too many failed.
    pub fn assemble(
        &self,
        kind: TestKind,
        observed: Observed,
        outcomes: Vec<(usize, Result<ReplicateRecord>)>,
    ) -> Result<DiagnosticReport> {
        let mut replicates = Vec::new();
        let mut failures = Vec::new();
        for (index, r) in outcomes {
            match r {
                Ok(rec) => replicates.push(rec),
                Err(e) => failures.push(FailedReplicate {
                    index,
                    error: e.to_string(),
                }),
            }
        }
        let total = replicates.len() + failures.len();
        if failures.len() as f64 > self.config.max_failed_fraction * total as f64
            || replicates.is_empty()
        {
            return Err(Error::TestAborted {
                failed: failures.len(),
                total,
                first: failures
                    .first()
                    .map(|f| f.error.clone())
                    .unwrap_or_default(),
            });
        }
        let mean_p_value =
            replicates.iter().map(|r| r.p_value).sum::<f64>() / replicates.len() as f64;
        let n = self.pipeline.times().len();
        Ok(DiagnosticReport {
            test_kind: kind,
            observed,
            replicates,
            failures,
            mean_p_value,
            decision: if mean_p_value < self.config.alpha {
                Decision::Reject
            } else {
                Decision::Retain
            },
            statistic_points: match kind {
                TestKind::Case2 => self.config.case2_points(n),
                TestKind::Case3 => self.config.case3_points(n),
            },
            config: self.config.clone(),
        })
    }

    /// Runs the requested tests sequentially over all replicates.
    pub fn run(&self, kinds: &[TestKind]) -> Result<Vec<DiagnosticReport>> {
        let observed = kinds
            .iter()
            .map(|&k| self.observed(k))
            .collect::<Result<Vec<_>>>()?;
        let mut per_kind: Vec<Vec<(usize, Result<ReplicateRecord>)>> =
            kinds.iter().map(|_| Vec::new()).collect();
        for b in 0..self.config.b1 {
            for (slot, r) in per_kind.iter_mut().zip(self.replicate(b, kinds)) {
                slot.push((b, r));
            }
        }
        kinds
            .iter()
            .zip(observed)
            .zip(per_kind)
            .map(|((&k, o), outs)| self.assemble(k, o, outs))
            .collect()
    }
}

/// Case-2 test: is the estimated forcing a function of the state?
pub fn case2_test(
    data: &TimeSeries,
    pipeline: &Pipeline,
    config: &TestConfig,
) -> Result<DiagnosticReport> {
    let runner = TestRunner::new(pipeline, data, config)?;
    Ok(runner.run(&[TestKind::Case2])?.remove(0))
}

/// Case-3 test: does lagged forcing predict the forcing beyond the state?
pub fn case3_test(
    data: &TimeSeries,
    pipeline: &Pipeline,
    config: &TestConfig,
) -> Result<DiagnosticReport> {
    let runner = TestRunner::new(pipeline, data, config)?;
    Ok(runner.run(&[TestKind::Case3])?.remove(0))
}
