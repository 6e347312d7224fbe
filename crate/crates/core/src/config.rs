//! Run configuration: one TOML file covering the world, safety parameters,
//! attacker, metrics, controller backend, and run matrix. Every field has a
//! default; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::attack::AttackConfig;
use crate::brain::RemoteConfig;
use crate::eval::{BrainChoice, MetricsConfig, SuiteConfig, SuiteSpec};
use crate::prompt::TaskConfig;
use crate::validator::SafetyParams;
use crate::world::{ScenarioKind, WorldConfig};

/// Controller backend section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrainSection {
    /// `scripted` pairs the secured cells with the screening policy and the
    /// baseline cells with the naive one; `remote` uses the HTTP backend in
    /// every cell.
    pub kind: BrainChoice,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for BrainSection {
    fn default() -> Self {
        Self {
            kind: BrainChoice::Scripted,
            endpoint: String::new(),
            model: String::new(),
            timeout_secs: 30,
        }
    }
}

/// Run matrix and output section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Scenario axis of the matrix.
    pub scenarios: Vec<ScenarioKind>,
    /// Trial seeds are `base_seed + trial index`, shared across cells.
    pub base_seed: u64,
    /// Worker threads for trial execution.
    pub jobs: u32,
    /// Artifact directory.
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scenarios: ScenarioKind::ALL.to_vec(),
            base_seed: 1,
            jobs: 1,
            output_dir: "runs/out".into(),
        }
    }
}

/// The complete run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub safety: SafetyParams,
    pub attack: AttackConfig,
    pub metrics: MetricsConfig,
    pub task: TaskConfig,
    pub brain: BrainSection,
    pub run: RunSection,
}

/// Configuration failure.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolved-config snapshot written next to run artifacts.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world.validate().map_err(ConfigError::Invalid)?;
        self.safety.validate().map_err(ConfigError::Invalid)?;
        self.attack.validate().map_err(ConfigError::Invalid)?;
        self.metrics.validate().map_err(ConfigError::Invalid)?;
        if self.run.scenarios.is_empty() {
            return Err(ConfigError::Invalid(
                "run.scenarios must be non-empty".into(),
            ));
        }
        if self.brain.kind == BrainChoice::Remote && self.brain.endpoint.is_empty() {
            return Err(ConfigError::Invalid(
                "brain.kind = \"remote\" requires brain.endpoint".into(),
            ));
        }
        Ok(())
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            world: self.world.clone(),
            safety: self.safety.clone(),
            metrics: self.metrics.clone(),
            task: self.task.clone(),
            attack: self.attack.clone(),
            brain_choice: self.brain.kind,
            remote: RemoteConfig {
                endpoint: self.brain.endpoint.clone(),
                model: self.brain.model.clone(),
                timeout_secs: self.brain.timeout_secs,
            },
        }
    }

    pub fn suite_spec(&self) -> SuiteSpec {
        SuiteSpec {
            scenarios: self.run.scenarios.clone(),
            trials_per_cell: self.metrics.trials_per_cell,
            base_seed: self.run.base_seed,
            jobs: self.run.jobs,
        }
    }
}
