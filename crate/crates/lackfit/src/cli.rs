//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::csvio::{read_series, write_series, write_trajectory};
use crate::error::AppError;
use crate::plots::export_plots;
use crate::power::power_study;
use crate::run::{diagnose_series, generate, with_jobs, ReplicateSeeds, RunReport};

const DEFAULT_OUT: &str = "lackfit-out";

#[derive(Debug, Parser)]
#[command(
    name = "lackfit",
    version,
    about = "Lack-of-fit diagnostics for ODE models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment config (TOML). Builtin defaults fill anything unset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of simulated replicates, overriding the config.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Worker threads (all cores by default). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate data sets from a builtin system.
    Simulate(Common),
    /// Fit the model to one data set and run both lack-of-fit tests.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Observations CSV (`time,x1,...`); simulated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rejection rates over simulated replicates.
    PowerStudy(Common),
    /// Rewrite the plot tables of a saved diagnosis.
    ExportPlots {
        /// `report.json` written by `diagnose`.
        #[arg(long)]
        report: PathBuf,
        /// Output directory (defaults to `plots/` next to the report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, AppError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if self.seed.is_some() {
            cfg.master_seed = self.seed;
        }
        if self.replicates.is_some() {
            cfg.replicates = self.replicates;
        }
        if self.out.is_some() {
            cfg.out_dir = self.out.clone();
        }
        Ok(cfg)
    }
}

/// Output directory of `cfg`; the saved config leaves it out so that runs
/// into different directories are byte-identical.
fn take_out_dir(cfg: &mut ExperimentConfig) -> PathBuf {
    cfg.out_dir
        .take()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write(path: &Path, text: &str) -> Result<(), AppError> {
    std::fs::write(path, text).map_err(AppError::io(path))
}

fn mkdir(path: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(path).map_err(AppError::io(path))
}

/// Runs a parsed command and returns a short summary for stdout.
pub fn run(cli: Cli) -> Result<String, AppError> {
    match cli.command {
        Command::Simulate(common) => {
            let mut cfg = common.load()?.resolve()?;
            let out = take_out_dir(&mut cfg);
            with_jobs(common.jobs, || simulate(&cfg, &out))?
        }
        Command::Diagnose { common, data } => {
            let mut cfg = common.load()?;
            if let Some(d) = data {
                if cfg.model.name.is_none() {
                    cfg.model.name = cfg.data.system.take();
                }
                cfg.data.system = None;
                cfg.data.csv = Some(d);
            }
            let mut cfg = cfg.resolve()?;
            let out = take_out_dir(&mut cfg);
            with_jobs(common.jobs, || diagnose(&cfg, &out))?
        }
        Command::PowerStudy(common) => {
            let mut cfg = common.load()?;
            let out = take_out_dir(&mut cfg);
            with_jobs(common.jobs, || {
                mkdir(&out)?;
                let rows = power_study(&cfg, &out)?;
                let mut s = String::new();
                for r in rows {
                    s += &format!(
                        "{} {} {}: {}/{} rejected (rate {:.3} ± {:.3}, {} failed)\n",
                        r.system,
                        r.generator,
                        r.test,
                        r.rejections,
                        r.completed,
                        r.rejection_rate,
                        r.mc_se,
                        r.failed
                    );
                }
                Ok(s)
            })?
        }
        Command::ExportPlots { report, out } => {
            let rep = RunReport::read(&report)?;
            let base = report.parent().unwrap_or(Path::new("."));
            let data = read_series(&base.join(&rep.data_file))?;
            let out = out.unwrap_or_else(|| base.join("plots"));
            let s = export_plots(&out, &rep, &data)?;
            Ok(format!(
                "wrote plot tables to {} ({} points)\n",
                out.display(),
                s.trimmed_points
            ))
        }
    }
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<String, AppError> {
    mkdir(out)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    let n = cfg.replicates.unwrap_or(1);
    (0..n).into_par_iter().try_for_each(|r| {
        let seeds = ReplicateSeeds::new(cfg.master_seed(), r);
        let g = generate(cfg, &seeds)?;
        let dir = out.join(format!("rep-{r:04}"));
        mkdir(&dir)?;
        write_trajectory(&dir.join("truth.csv"), &g.truth)?;
        write_series(&dir.join("observations.csv"), &g.observations)?;
        let seeds_json = serde_json::to_string_pretty(&seeds).expect("seeds serialise");
        write(&dir.join("seeds.json"), &seeds_json)
    })?;
    Ok(format!(
        "simulated {n} replicate(s) into {}\n",
        out.display()
    ))
}

fn diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<String, AppError> {
    mkdir(out)?;
    let seeds = ReplicateSeeds::new(cfg.master_seed(), 0);
    let mut cfg = cfg.clone();
    let data = match &cfg.data.csv {
        Some(p) => {
            let data = read_series(p)?;
            // the archived config points at the copy written below
            cfg.data.csv = Some(PathBuf::from("observations.csv"));
            data
        }
        None => {
            let g = generate(&cfg, &seeds)?;
            write_trajectory(&out.join("truth.csv"), &g.truth)?;
            g.observations
        }
    };
    let cfg = &cfg;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    write_series(&out.join("observations.csv"), &data)?;
    let (report, failures) = diagnose_series(cfg, &data, seeds, "observations.csv")?;
    write(&out.join("report.json"), &report.to_json())?;
    let plots = export_plots(&out.join("plots"), &report, &data);
    if let Some(e) = failures.into_iter().next() {
        return Err(e.into());
    }
    plots?;
    let mut s = String::new();
    for r in [&report.case2, &report.case3].into_iter().flatten() {
        s += &format!(
            "{:?}: mean p = {:.4}, {:?} at alpha = {}\n",
            r.test_kind, r.mean_p_value, r.decision, r.config.alpha
        );
    }
    Ok(s)
}
