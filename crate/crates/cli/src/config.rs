//! Experiment configuration: strict JSON (unknown fields are rejected) that
//! maps onto the engine's run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use replaycl::data::BenchmarkSpec;
use replaycl::nn::TrainConfig;
use replaycl::replay::PreservationConfig;
use replaycl::scenario::{RunConfig, ScenarioKind, SdgConfig, StrategyId};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub strategies: Vec<StrategyId>,
    /// Inline benchmark generation...
    #[serde(default)]
    pub benchmark: Option<BenchmarkSpec>,
    /// ...or a manifest written by `replaycl generate`. Exactly one of the
    /// two must be present.
    #[serde(default)]
    pub data_manifest: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub preservation: PreservationSection,
    #[serde(default)]
    pub sdg: SdgSection,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub pca_components: Option<usize>,
    #[serde(default = "default_healthy_class")]
    pub healthy_class: u32,
}

fn default_healthy_class() -> u32 {
    0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
}

fn d_lr() -> f64 {
    0.005
}
fn d_momentum() -> f64 {
    0.9
}
fn d_batch() -> usize {
    128
}
fn d_epochs() -> usize {
    300
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { learning_rate: d_lr(), momentum: d_momentum(), batch_size: d_batch(), epochs: d_epochs() }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_hidden")]
    pub hidden_layers: Vec<usize>,
}

fn d_hidden() -> Vec<usize> {
    vec![256, 128, 128]
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden_layers: d_hidden() }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PreservationSection {
    #[serde(default = "d_percentile")]
    pub percentile: f64,
}

fn d_percentile() -> f64 {
    70.0
}

impl Default for PreservationSection {
    fn default() -> Self {
        Self { percentile: d_percentile() }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SdgSection {
    #[serde(default = "d_c_max")]
    pub c_max: usize,
    #[serde(default = "d_h_max")]
    pub h_max: f64,
    #[serde(default = "d_fraction")]
    pub synthetic_fraction: f64,
}

fn d_c_max() -> usize {
    50
}
fn d_h_max() -> f64 {
    0.5
}
fn d_fraction() -> f64 {
    1.0
}

impl Default for SdgSection {
    fn default() -> Self {
        Self { c_max: d_c_max(), h_max: d_h_max(), synthetic_fraction: d_fraction() }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::usage(format!("cannot read config '{}': {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::usage(format!("invalid config '{}': {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.strategies.is_empty() {
            return Err(CliError::usage("config needs at least one strategy"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::usage("config needs at least one seed"));
        }
        match (&self.benchmark, &self.data_manifest) {
            (Some(_), Some(_)) => {
                return Err(CliError::usage("give either 'benchmark' or 'data_manifest', not both"))
            }
            (None, None) => {
                return Err(CliError::usage("one of 'benchmark' or 'data_manifest' is required"))
            }
            _ => {}
        }
        self.run_config().validate().map_err(CliError::from_config)?;
        Ok(())
    }

    /// Engine configuration (the per-run seed is filled in later).
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            train: TrainConfig {
                learning_rate: self.train.learning_rate,
                momentum: self.train.momentum,
                batch_size: self.train.batch_size,
                epochs: self.train.epochs,
                seed: 0,
            },
            hidden_layers: self.model.hidden_layers.clone(),
            preservation: PreservationConfig { percentile: self.preservation.percentile },
            sdg: SdgConfig {
                c_max: self.sdg.c_max,
                h_max: self.sdg.h_max,
                synthetic_fraction: self.sdg.synthetic_fraction,
            },
            pca_components: self.pca_components,
            healthy_class: self.healthy_class,
            smote_neighbors: 5,
        }
    }
}
