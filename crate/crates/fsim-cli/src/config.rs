//! JSON run configurations.
//!
//! Config files are single JSON documents whose keys mirror the engine's
//! configuration field names; federation parameters use the conventional
//! letters `C`, `E`, `B`. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fsim_core::data::{SynthTask, SynthTaskSpec};
use fsim_core::federation::{AggregatorKind, FederationConfig, SamplerKind};
use fsim_core::model::ModelSpec;
use fsim_core::optim::OptimizerChoice;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("cannot load task file {path}: {source}")]
    Task { path: PathBuf, source: fsim_core::io::FormatError },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where a run's federated task comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSource {
    /// Generate a synthetic task from a spec.
    Synth(SynthTaskSpec),
    /// Load a previously exported FSIM1 dataset blob.
    File(PathBuf),
}

impl TaskSource {
    pub fn load(&self) -> Result<SynthTask, ConfigError> {
        match self {
            TaskSource::Synth(spec) => fsim_core::data::synth_federated_task(spec)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            TaskSource::File(path) => fsim_core::io::load_dataset(path)
                .map_err(|source| ConfigError::Task { path: path.clone(), source }),
        }
    }
}

/// Configuration of one federated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskSource,
    pub model: ModelSpec,
    pub federation: FederationConfig,
}

/// Grid search over `C x E x seeds` with everything else held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub task: TaskSource,
    pub model: ModelSpec,
    #[serde(rename = "C")]
    pub c_values: Vec<f64>,
    #[serde(rename = "E")]
    pub e_values: Vec<u32>,
    #[serde(rename = "B")]
    pub batch_size: usize,
    pub rounds: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub optimizer: OptimizerChoice,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    #[serde(default = "default_aggregator")]
    pub aggregator: AggregatorKind,
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Uniform
}

fn default_aggregator() -> AggregatorKind {
    AggregatorKind::FedAvg
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.c_values.is_empty() || self.e_values.is_empty() || self.seeds.is_empty() {
            return Err(ConfigError::Invalid("C, E, and seeds lists must be nonempty".into()));
        }
        for (c, e, seed) in self.cells() {
            self.cell_config(c, e, seed)
                .validate()
                .map_err(|err| ConfigError::Invalid(err.to_string()))?;
        }
        Ok(())
    }

    /// Cell order: C outermost, then E, then seed.
    pub fn cells(&self) -> Vec<(f64, u32, u64)> {
        let mut cells = Vec::new();
        for &c in &self.c_values {
            for &e in &self.e_values {
                for &seed in &self.seeds {
                    cells.push((c, e, seed));
                }
            }
        }
        cells
    }

    pub fn cell_config(&self, c: f64, e: u32, seed: u64) -> FederationConfig {
        FederationConfig {
            client_fraction: c,
            local_epochs: e,
            batch_size: self.batch_size,
            rounds: self.rounds,
            seed,
            optimizer: self.optimizer,
            sampler: self.sampler,
            aggregator: self.aggregator,
            record_wall_time: self.record_wall_time,
        }
    }
}

/// Centralized baseline training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralConfig {
    pub task: TaskSource,
    pub model: ModelSpec,
    /// Maximum epochs; early stopping may end training sooner.
    pub epochs: u32,
    #[serde(rename = "B", default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerChoice,
    /// Stop after this many epochs without validation improvement.
    #[serde(default = "default_patience")]
    pub patience: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    64
}

fn default_optimizer() -> OptimizerChoice {
    OptimizerChoice::adam_default_lr()
}

fn default_patience() -> u32 {
    5
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
}
