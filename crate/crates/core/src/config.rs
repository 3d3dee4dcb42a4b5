//! The `.cfg` run configuration: TOML sections whose keys mirror the library
//! config structs. Every section and key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingConfig, TrainConfig};
use crate::eval::{BenchConfig, OracleCheckConfig};
use crate::mass::MassConfig;
use crate::pipeline::{PipelineConfig, PoseConfig};
use crate::sim::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub buffer_len: usize,
    pub tie_tolerance: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            buffer_len: d.buffer_len,
            tie_tolerance: d.tie_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: ScenarioConfig,
    pub mass: MassConfig,
    pub pose: PoseConfig,
    pub pipeline: PipelineSection,
    pub embedding: EmbeddingConfig,
    pub training: TrainConfig,
    pub bench: BenchConfig,
    pub oracle: OracleCheckConfig,
}

impl FileConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The pipeline settings, with tau taken from the scenario.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            buffer_len: self.pipeline.buffer_len,
            tau_ms: self.scenario.sample_interval_tau,
            tie_tolerance: self.pipeline.tie_tolerance,
            mass: self.mass.clone(),
            pose: self.pose.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.scenario.validate().map_err(|e| invalid(&e))?;
        self.pipeline_config().validate().map_err(|e| invalid(&e))?;
        self.embedding.validate().map_err(|e| invalid(&e))?;
        Ok(())
    }
}
