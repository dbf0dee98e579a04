//! Monte Carlo rejection rates over simulated replicates.

use std::path::Path;

use lackfit_core::diagnose::{Decision, DiagnosticReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::csvio::write_series;
use crate::error::AppError;
use crate::run::{diagnose_series, generate, ReplicateSeeds, RunReport};

/// One line of `power.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub system: String,
    pub generator: String,
    pub test: String,
    pub replicates: usize,
    pub completed: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Monte Carlo standard error of the rejection rate.
    pub mc_se: f64,
    pub failed: usize,
}

impl PowerRow {
    fn tally(cfg: &ExperimentConfig, test: &str, outcomes: &[Option<&DiagnosticReport>]) -> Self {
        let completed = outcomes.iter().flatten().count();
        let rejections = outcomes
            .iter()
            .flatten()
            .filter(|r| r.decision == Decision::Reject)
            .count();
        let rate = if completed > 0 {
            rejections as f64 / completed as f64
        } else {
            f64::NAN
        };
        Self {
            system: cfg.data.system.clone().unwrap_or_default(),
            generator: cfg.data.generator.unwrap_or_default().name().into(),
            test: test.into(),
            replicates: outcomes.len(),
            completed,
            rejections,
            rejection_rate: rate,
            mc_se: (rate * (1.0 - rate) / completed as f64).sqrt(),
            failed: outcomes.len() - completed,
        }
    }
}

/// Simulates and diagnoses one replicate, writing its report under `dir`.
fn replicate(cfg: &ExperimentConfig, r: usize, dir: &Path) -> Result<RunReport, AppError> {
    let seeds = ReplicateSeeds::new(cfg.master_seed(), r);
    let generated = generate(cfg, &seeds)?;
    std::fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    write_series(&dir.join("observations.csv"), &generated.observations)?;
    let (report, _) = diagnose_series(cfg, &generated.observations, seeds, "observations.csv")?;
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(AppError::io(&path))?;
    Ok(report)
}

/// Runs every cell of `cfg` and writes `power.csv` plus per-cell configs
/// and per-replicate reports under `out`.
pub fn power_study(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PowerRow>, AppError> {
    let cells = cfg.cell_configs()?;
    let mut rows = Vec::new();
    for cell in &cells {
        if cell.source_system().is_none() {
            return Err(AppError::Config("a power study needs data.system".into()));
        }
        let dir = out.join(cell.label());
        std::fs::create_dir_all(&dir).map_err(AppError::io(&dir))?;
        let cfg_path = dir.join("config.toml");
        std::fs::write(&cfg_path, cell.to_toml()).map_err(AppError::io(&cfg_path))?;
        let n = cell.replicates.unwrap_or(1);
        let results: Vec<Result<RunReport, AppError>> = (0..n)
            .into_par_iter()
            .map(|r| replicate(cell, r, &dir.join(format!("rep-{r:04}"))))
            .collect();
        // write failures abort the study; estimation failures count against the replicate
        let mut reports = Vec::with_capacity(n);
        for r in results {
            match r {
                Ok(rep) => reports.push(Some(rep)),
                Err(e @ AppError::Io { .. }) => return Err(e),
                Err(_) => reports.push(None),
            }
        }
        let case2: Vec<_> = reports
            .iter()
            .map(|r| r.as_ref().and_then(|r| r.case2.as_ref()))
            .collect();
        let case3: Vec<_> = reports
            .iter()
            .map(|r| r.as_ref().and_then(|r| r.case3.as_ref()))
            .collect();
        rows.push(PowerRow::tally(cell, "case2", &case2));
        rows.push(PowerRow::tally(cell, "case3", &case3));
    }
    write_power_csv(&out.join("power.csv"), &rows)?;
    Ok(rows)
}

pub fn write_power_csv(path: &Path, rows: &[PowerRow]) -> Result<(), AppError> {
    let err = |e: csv::Error| AppError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(AppError::io(path))
}
