//! Experiment configuration files.
//!
//! A config is a TOML document. Every field is optional; [`ExperimentConfig::resolve`]
//! fills the gaps from the builtin system's defaults, and the resolved form
//! (which parses back to itself) is written next to every output.
//!
//! ```toml
//! master_seed = 7
//! replicates = 20
//!
//! [data]
//! system = "vanderpol"      # or: csv = "observations.csv"
//! generator = "sde"
//!
//! [model]
//! name = "linear2d"
//!
//! [smoothing]
//! state_lambda = 0.01
//!
//! [test]
//! b1 = 100
//! b2 = 199
//!
//! [[cells]]                 # power study only
//! system = "rossler"
//! generator = "ode"
//! ```

use std::path::{Path, PathBuf};

use lackfit_core::diagnose::{PipelineSettings, TestConfig};
use lackfit_core::dynsys::{builtin_system, Builtin, ForcingSpec, ModelOrder};
use lackfit_core::rng::derive_seed;
use lackfit_core::splines::ScatterSettings;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Ode,
    Sde,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Ode => "ode",
            Generator::Sde => "sde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Builtin system that generates data.
    pub system: Option<String>,
    /// User observations (`time,x1,...`) instead of simulated data.
    pub csv: Option<PathBuf>,
    pub generator: Option<Generator>,
    pub theta: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub obs_noise_var: Option<Vec<f64>>,
    pub sde_sigma2: Option<Vec<f64>>,
    pub sde_step: Option<f64>,
    /// Right-hand-side multiplier for ODE generation.
    pub ode_speedup: Option<f64>,
    /// RK4 substep for ODE generation.
    pub ode_substep: Option<f64>,
    pub n_points: Option<usize>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Builtin model fitted to the data.
    pub name: Option<String>,
    pub order: Option<ModelOrder>,
    pub forcing: Option<ForcingSpec>,
    pub theta_init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub state_knot_spacing: Option<f64>,
    pub state_lambda: Option<f64>,
    pub forcing_knot_spacing: Option<f64>,
    pub forcing_lambda: Option<f64>,
    pub quad_per_interval: Option<usize>,
}

/// One (system, generator) cell of a power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub system: String,
    #[serde(default)]
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Written as a string when above `i64::MAX`, which TOML integers cannot hold.
    #[serde(with = "seed_repr", skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub replicates: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub smoothing: SmoothingConfig,
    pub scatter: ScatterSettings,
    pub test: TestConfig,
    pub cells: Vec<CellConfig>,
}

mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match seed {
            Some(v) if *v <= i64::MAX as u64 => (*v as i64).serialize(s),
            Some(v) => v.to_string().serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v)
                .map(Some)
                .map_err(|_| de::Error::custom("master_seed must be nonnegative")),
            Repr::Text(t) => t
                .parse()
                .map(Some)
                .map_err(|_| de::Error::custom(format!("master_seed `{t}` is not a u64"))),
        }
    }
}

fn config_err(msg: impl Into<String>) -> AppError {
    AppError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), AppError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: &[f64]) -> Result<(), AppError> {
    match v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        Some(x) => Err(config_err(format!("{name} must be nonnegative, got {x}"))),
        None => Ok(()),
    }
}

fn lookup(name: &str) -> Result<Builtin, AppError> {
    builtin_system(name).map_err(|e| config_err(e.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Reads a config file. Relative CSV paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if let (Some(csv), Some(dir)) = (&cfg.data.csv, path.parent()) {
            if csv.is_relative() {
                cfg.data.csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Fills every unset field from the builtin defaults and validates the
    /// result.
    pub fn resolve(&self) -> Result<Self, AppError> {
        let mut c = self.clone();
        let d = &mut c.data;
        let csv = d.csv.is_some();
        if csv && d.system.is_some() {
            return Err(config_err(
                "data.system and data.csv are mutually exclusive",
            ));
        }
        if let Some(p) = &d.csv {
            if !p.is_file() {
                return Err(config_err(format!(
                    "data.csv: no such file {}",
                    p.display()
                )));
            }
        }
        let model_name = match (&c.model.name, &d.system) {
            (Some(m), _) => m.clone(),
            (None, Some(s)) => lookup(s)?.defaults.fit_model,
            (None, None) if csv => return Err(config_err("model.name is required with data.csv")),
            (None, None) => {
                d.system = Some("linear2d".into());
                "linear2d".into()
            }
        };
        let model = lookup(&model_name)?;
        // defaults for smoothing come from the generating system when there is
        // one, otherwise from the fitted model
        let source = match &d.system {
            Some(s) => lookup(s)?,
            None => model.clone(),
        };
        let sd = &source.defaults;
        if !csv {
            let b = &source;
            d.generator.get_or_insert(Generator::Ode);
            d.theta.get_or_insert_with(|| b.theta.clone());
            d.x0.get_or_insert_with(|| b.x0.clone());
            d.obs_noise_var
                .get_or_insert_with(|| vec![sd.obs_noise_var]);
            d.sde_sigma2.get_or_insert_with(|| vec![sd.sde_sigma2]);
            d.sde_step.get_or_insert(sd.sde_step);
            d.ode_speedup.get_or_insert(sd.ode_speedup);
            d.ode_substep.get_or_insert(1e-3);
            d.n_points.get_or_insert(sd.n_points);
            d.t_start.get_or_insert(sd.t_start);
            d.t_end.get_or_insert(sd.t_end);
        }
        let m = &mut c.model;
        m.name = Some(model_name);
        m.order.get_or_insert(sd.model_order);
        m.forcing.get_or_insert(model.system.forcing);
        let s = &mut c.smoothing;
        s.state_knot_spacing.get_or_insert(sd.state_knot_spacing);
        s.state_lambda.get_or_insert(sd.state_lambda);
        s.forcing_knot_spacing
            .get_or_insert(sd.forcing_knot_spacing);
        s.forcing_lambda.get_or_insert(sd.forcing_lambda);
        s.quad_per_interval.get_or_insert(4);
        c.master_seed.get_or_insert(0);
        c.replicates.get_or_insert(1);
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), AppError> {
        let d = &self.data;
        if let Some(sys) = &d.system {
            let b = lookup(sys)?;
            let theta = d.theta.as_ref().unwrap();
            if theta.len() != b.system.param_dim() {
                return Err(config_err(format!(
                    "data.theta: {sys} has {} parameters, got {}",
                    b.system.param_dim(),
                    theta.len()
                )));
            }
            if d.x0.as_ref().unwrap().len() != b.system.dim {
                return Err(config_err(format!(
                    "data.x0: {sys} has {} states",
                    b.system.dim
                )));
            }
            let obs = d.obs_noise_var.as_ref().unwrap();
            if obs.len() != 1 && obs.len() != b.system.observed.len() {
                return Err(config_err(
                    "data.obs_noise_var needs 1 entry or one per observed coordinate",
                ));
            }
            nonnegative("data.obs_noise_var", obs)?;
            nonnegative("data.sde_sigma2", d.sde_sigma2.as_ref().unwrap())?;
            positive("data.sde_step", d.sde_step.unwrap())?;
            positive("data.ode_speedup", d.ode_speedup.unwrap())?;
            positive("data.ode_substep", d.ode_substep.unwrap())?;
            if d.n_points.unwrap() < 10 {
                return Err(config_err("data.n_points must be at least 10"));
            }
            if !(d.t_end.unwrap() > d.t_start.unwrap()) {
                return Err(config_err("data.t_end must exceed data.t_start"));
            }
        }
        let model = lookup(self.model.name.as_ref().unwrap())?;
        if let Some(t) = &self.model.theta_init {
            if t.len() != model.system.param_dim() {
                return Err(config_err("model.theta_init has the wrong length"));
            }
        }
        model
            .system
            .clone()
            .with_forcing(self.model.forcing.unwrap())
            .map_err(|e| config_err(format!("model.forcing: {e}")))?;
        let s = &self.smoothing;
        positive(
            "smoothing.state_knot_spacing",
            s.state_knot_spacing.unwrap(),
        )?;
        positive(
            "smoothing.forcing_knot_spacing",
            s.forcing_knot_spacing.unwrap(),
        )?;
        nonnegative("smoothing.state_lambda", &[s.state_lambda.unwrap()])?;
        nonnegative("smoothing.forcing_lambda", &[s.forcing_lambda.unwrap()])?;
        if s.quad_per_interval.unwrap() == 0 {
            return Err(config_err("smoothing.quad_per_interval must be positive"));
        }
        let t = &self.test;
        if t.b1 == 0 || t.b2 == 0 {
            return Err(config_err("test.b1 and test.b2 must be positive"));
        }
        if !(t.alpha > 0.0 && t.alpha < 1.0) {
            return Err(config_err("test.alpha must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&t.max_failed_fraction) {
            return Err(config_err("test.max_failed_fraction must lie in [0, 1]"));
        }
        if self.replicates == Some(0) {
            return Err(config_err("replicates must be positive"));
        }
        for cell in &self.cells {
            lookup(&cell.system)?;
        }
        Ok(())
    }

    /// Builtin that generates data, if any (resolved configs only).
    pub fn source_system(&self) -> Option<Builtin> {
        self.data
            .system
            .as_deref()
            .map(|s| builtin_system(s).expect("validated"))
    }

    /// The fitted model with its forcing injection (resolved configs only).
    pub fn model_system(&self) -> lackfit_core::dynsys::DynamicalSystem {
        builtin_system(self.model.name.as_ref().unwrap())
            .expect("validated")
            .system
            .with_forcing(self.model.forcing.unwrap())
            .expect("validated")
    }

    pub fn pipeline_settings(&self) -> PipelineSettings {
        let s = &self.smoothing;
        PipelineSettings {
            state_knot_spacing: s.state_knot_spacing.unwrap(),
            state_lambda: s.state_lambda.unwrap(),
            forcing_knot_spacing: s.forcing_knot_spacing.unwrap(),
            forcing_lambda: s.forcing_lambda.unwrap(),
            quad_per_interval: s.quad_per_interval.unwrap(),
            model_order: self.model.order.unwrap(),
            scatter: self.scatter.clone(),
            theta_init: self.model.theta_init.clone(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed.unwrap_or(0)
    }

    /// Configs for each power-study cell, resolved. With no cells the
    /// config itself is the only cell; otherwise cell `i` runs under the
    /// child seed `derive_seed(master, [i])`.
    pub fn cell_configs(&self) -> Result<Vec<Self>, AppError> {
        if self.cells.is_empty() {
            let mut c = self.resolve()?;
            c.cells.clear();
            return Ok(vec![c]);
        }
        let master = self.master_seed.unwrap_or(0);
        self.cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let mut c = self.clone();
                c.cells.clear();
                c.data = DataConfig {
                    system: Some(cell.system.clone()),
                    generator: Some(cell.generator),
                    ..self.data.clone()
                };
                c.data.csv = None;
                c.master_seed = Some(derive_seed(master, &[i as u64]));
                c.resolve()
            })
            .collect()
    }

    /// Short label for tables and directory names.
    pub fn label(&self) -> String {
        match (&self.data.system, &self.data.csv) {
            (Some(s), _) => format!("{s}-{}", self.data.generator.unwrap_or_default().name()),
            (None, Some(p)) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            (None, None) => "unnamed".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_the_linear_benchmark() {
        let c = ExperimentConfig::from_toml("").unwrap().resolve().unwrap();
        assert_eq!(c.data.system.as_deref(), Some("linear2d"));
        assert_eq!(c.data.n_points, Some(440));
        assert_eq!(c.data.obs_noise_var, Some(vec![0.25]));
        assert_eq!(c.model.name.as_deref(), Some("linear2d"));
        assert_eq!(c.smoothing.state_knot_spacing, Some(0.25));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::from_toml(
            "[data]\nsystem = \"rossler_chaotic\"\ngenerator = \"sde\"\n",
        )
        .unwrap()
        .resolve()
        .unwrap();
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.resolve().unwrap(), c);
        assert_eq!(c.data.ode_speedup, Some(2.0));
    }

    #[test]
    fn unknown_keys_are_reported_with_their_line() {
        let err = ExperimentConfig::from_toml(
            "master_seed = 1\n[data]\nsystem = \"vanderpol\"\nnoise = 3\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("noise"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = ExperimentConfig::from_toml("[data]\nsystem = \"vanderpol\"\ntheta = [1.0]\n")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().contains("data.theta"));
        let err = ExperimentConfig::from_toml("[data]\nsystem = \"lorenz\"\n")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().contains("vanderpol"));
    }

    #[test]
    fn cells_get_distinct_seeds() {
        let c = ExperimentConfig::from_toml(
            "master_seed = 3\n[[cells]]\nsystem = \"linear2d\"\n[[cells]]\nsystem = \"vanderpol\"\ngenerator = \"sde\"\n",
        )
        .unwrap();
        let cells = c.cell_configs().unwrap();
        assert_eq!(cells.len(), 2);
        assert_ne!(cells[0].master_seed, cells[1].master_seed);
        for c in &cells {
            assert_eq!(&ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
        assert_eq!(cells[1].data.generator, Some(Generator::Sde));
        assert_eq!(cells[1].data.obs_noise_var, Some(vec![0.001]));
        assert_eq!(cells[1].label(), "vanderpol-sde");
    }
}
