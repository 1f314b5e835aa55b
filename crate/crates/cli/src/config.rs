//! Run configuration files.

use std::path::PathBuf;

use ddrl_core::agents::{Architecture, TrainConfig, CHECKPOINT_EVERY};
use ddrl_core::{EnvConfig, PpoConfig, RobotGeometry, TerrainSpec};
use serde::{Deserialize, Serialize};

/// Everything one training run depends on. Unknown keys are rejected, and the
/// resolved config is written next to every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub terrain: TerrainSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub geometry: RobotGeometry,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

fn default_epochs() -> usize {
    5000
}

fn default_eval_episodes() -> usize {
    100
}

fn default_checkpoint_every() -> usize {
    CHECKPOINT_EVERY
}

impl RunConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            terrain: TerrainSpec::Flat,
            seed: default_seed(),
            epochs: default_epochs(),
            eval_episodes: default_eval_episodes(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            geometry: RobotGeometry::default(),
            checkpoint_every: default_checkpoint_every(),
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section; the message names the offending field.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.epochs == 0 {
            anyhow::bail!("invalid config: epochs must be at least 1");
        }
        if self.eval_episodes == 0 {
            anyhow::bail!("invalid config: eval_episodes must be at least 1");
        }
        if self.checkpoint_every == 0 {
            anyhow::bail!("invalid config: checkpoint_every must be at least 1");
        }
        self.env.validate().map_err(|e| anyhow::anyhow!("invalid config: env.{}", strip(&e)))?;
        self.ppo.validate().map_err(|e| anyhow::anyhow!("invalid config: {}", strip(&e)))?;
        self.geometry.validate().map_err(|e| anyhow::anyhow!("invalid config: geometry.{}", strip(&e)))?;
        self.terrain.validate().map_err(|e| anyhow::anyhow!("invalid config: {}", strip(&e)))?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            architecture: self.architecture,
            seed: self.seed,
            epochs: self.epochs,
            terrain: self.terrain.clone(),
            env: self.env.clone(),
            ppo: self.ppo.clone(),
            geometry: self.geometry.clone(),
            checkpoint_every: self.checkpoint_every,
        }
    }

    /// `<arch>_<terrain>_seed<seed>`.
    pub fn run_name(&self) -> String {
        format!("{}_{}_seed{}", self.architecture, self.terrain.label(), self.seed)
    }
}

fn strip(e: &ddrl_core::Error) -> String {
    match e {
        ddrl_core::Error::Domain(m) | ddrl_core::Error::Usage(m) => m.clone(),
        other => other.to_string(),
    }
}
