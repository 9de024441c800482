use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use flowpath_core::cde::{ModelConfig, PathSpec};
use flowpath_core::data::SyntheticKind;
use flowpath_core::path::AnchorMode;
use flowpath_core::train::{GradientEngine, GridSpec, Optimizer};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic {
        name: SyntheticKind,
        n: usize,
        noise_sd: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Synthetic { name, .. } => name.to_string(),
            DatasetSpec::Csv { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub d_z: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub flow_layers: usize,
    pub flow_hidden: usize,
    pub sn_cap: f64,
    pub anchor: AnchorMode,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            d_z: 16,
            hidden: 32,
            n_layers: 1,
            flow_layers: 2,
            flow_hidden: 32,
            sn_cap: 0.8,
            anchor: AnchorMode::Anchored,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub gradient_engine: GradientEngine,
    pub solver_steps: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_epochs: 100,
            patience: 10,
            batch_size: 16,
            optimizer: Optimizer::Adam,
            gradient_engine: GradientEngine::Discrete,
            solver_steps: 64,
        }
    }
}

/// One experiment definition: dataset, method, protocol, model and training
/// hyperparameters, seeds. Everything a run needs lives in this file; reruns
/// with the same config are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Path construction for `train`; `ablate` runs its fixed set instead.
    #[serde(default)]
    pub method: Option<PathSpec>,
    pub missing_rates: Vec<f64>,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates; parse errors carry the JSON field path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let deserializer = &mut serde_json::Deserializer::from_str(&text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(deserializer)
            .map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("config field `seeds`: at least one seed required");
        }
        for (i, r) in self.missing_rates.iter().enumerate() {
            if !(0.0..1.0).contains(r) {
                bail!("config field `missing_rates[{i}]`: rate {r} outside [0, 1)");
            }
        }
        if self.missing_rates.is_empty() {
            bail!("config field `missing_rates`: at least one rate required (use 0.0 for none)");
        }
        Ok(())
    }

    /// Model shape for a dataset with the given data dimension and classes.
    pub fn model_config(&self, d_x: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            d_x,
            d_z: self.model.d_z,
            num_classes,
            hidden: self.model.hidden,
            n_layers: self.model.n_layers,
            flow_layers: self.model.flow_layers,
            flow_hidden: self.model.flow_hidden,
            sn_cap: self.model.sn_cap,
            solver_steps: self.train.solver_steps,
        }
    }
}
