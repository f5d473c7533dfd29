//! Experiment configuration: a TOML document with every field optional,
//! unknown keys rejected, and `key=value` overrides addressed by dotted path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::datasets::DatasetSpec;
use crate::models::{Architecture, ModelVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricToggles {
    /// Crossing number of the y trace (projected models on one circle).
    pub crossings: bool,
    /// Cyclic order of the arc endpoints when the encoded loop splits.
    pub cyclic_order: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        MetricToggles { crossings: true, cyclic_order: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub variant: ModelVariant,
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Source angles per evaluation path.
    pub eval_path_samples: usize,
    /// Evaluation paths per attribute on the torus.
    pub torus_paths_per_factor: usize,
    /// Seeds trained concurrently; 0 uses every available core.
    pub workers: usize,
    /// Epochs between checkpoints; 0 writes one at the end only.
    pub checkpoint_every: usize,
    pub metrics: MetricToggles,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            variant: ModelVariant::default(),
            architecture: Architecture::default(),
            epochs: 300,
            batch_size: 64,
            learning_rate: 5e-4,
            seeds: (0..8).collect(),
            output_dir: PathBuf::from("runs"),
            eval_path_samples: crate::topology_metrics::DEFAULT_PATH_SAMPLES,
            torus_paths_per_factor: 5,
            workers: 1,
            checkpoint_every: 0,
            metrics: MetricToggles::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serialises")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: String| Err(ExperimentError::ConfigInvalid(m));
        if self.epochs == 0 {
            return invalid("epochs must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be at least 1".into());
        }
        if self.eval_path_samples < crate::datasets::MIN_SAMPLES {
            return invalid(format!("eval_path_samples must be at least {}", crate::datasets::MIN_SAMPLES));
        }
        if self.torus_paths_per_factor == 0 {
            return invalid("torus_paths_per_factor must be at least 1".into());
        }
        if self.dataset.circles() != self.variant.latent.circles() {
            return invalid("the latent space must have one circle per dataset factor".into());
        }
        self.dataset.validate().map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        self.variant.validate().map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }

    /// Applies `key=value` overrides, e.g. `variant.beta=4` or
    /// `seeds=[1,2]`. Values are parsed as TOML and fall back to strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ExperimentError> {
        let mut doc = toml::Table::try_from(self).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| ExperimentError::ConfigInvalid(format!("override `{o}` is not key=value")))?;
            let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.trim().to_string()),
            };
            let parts: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = parts.split_last().expect("split yields one part");
            let mut table = &mut doc;
            for p in parents {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| ExperimentError::ConfigInvalid(format!("`{p}` is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let cfg: ExperimentConfig =
            doc.try_into().map_err(|e: toml::de::Error| ExperimentError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything that determines the outcome of one seed's run; stored in
    /// checkpoints and compared on resume.
    pub fn run_echo(&self, seed: u64) -> String {
        #[derive(Serialize)]
        struct RunIdentity<'a> {
            seed: u64,
            epochs: usize,
            batch_size: usize,
            learning_rate: f64,
            dataset: &'a DatasetSpec,
            variant: &'a ModelVariant,
            architecture: &'a Architecture,
        }
        toml::to_string(&RunIdentity {
            seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            dataset: &self.dataset,
            variant: &self.variant,
            architecture: &self.architecture,
        })
        .expect("run identity serialises")
    }
}
