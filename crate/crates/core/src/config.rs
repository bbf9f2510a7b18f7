//! Hierarchical TOML configuration: every section defaults, unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::DetectorConfig;
use crate::env::RewardWeights;
use crate::error::{Error, Result};
use crate::marl::trainer::{TrainerConfig, Variant};
use crate::scenario::ScenarioConfig;

/// Campaign-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Evaluation replays per trained policy.
    pub eval_episodes: usize,
    /// Packet-loss level used for the "fraction of steps below" summary.
    pub loss_threshold: f64,
    /// Episodes per fixed-policy baseline in `simulate`.
    pub simulate_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            variants: Variant::ALL.to_vec(),
            eval_episodes: 5,
            loss_threshold: 0.2,
            simulate_episodes: 3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("run.seeds", "at least one seed required"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("run.variants", "at least one variant required"));
        }
        if self.eval_episodes < 1 || self.simulate_episodes < 1 {
            return Err(Error::config("run", "episode counts must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.loss_threshold) {
            return Err(Error::config("run.loss_threshold", "must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub rewards: RewardWeights,
    pub trainer: TrainerConfig,
    pub detector: DetectorConfig,
    pub run: RunConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.scenario.seed > i64::MAX as u64 {
            return Err(Error::config("scenario.seed", "must fit in a signed 64-bit integer"));
        }
        if self.run.seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(Error::config("run.seeds", "must fit in a signed 64-bit integer"));
        }
        self.scenario.validate()?;
        self.rewards.validate()?;
        self.trainer.validate()?;
        self.detector.validate()?;
        self.run.validate()
    }

    /// Parse and validate; missing keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<toml>", e.to_string().trim()))?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    /// Fully resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// SHA-256 of the resolved TOML, lower-case hex. Independent of key order in the source file.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
