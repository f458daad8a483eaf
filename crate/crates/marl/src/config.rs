//! TOML run configuration with four blocks: `[scenario]`, `[trainer]`,
//! `[network]` and `[run]`. Every key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use marl_core::graph::EdgeEncoding;
use marl_core::rl::{Algorithm, NetworkConfig, TrainerConfig, UpdateTiming};
use marl_core::{Scenario, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Overrides `run.output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "MARL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Jungle,
    Battle,
    Deception,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    QmarlAc,
    QmarlPg,
    VanillaPg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateName {
    Batch,
    Step,
}

/// Who controls the teams other than team 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Opponent {
    /// Every team learns its own shared parameters.
    #[value(name = "self")]
    #[serde(rename = "self")]
    SelfPlay,
    /// Teams other than team 0 act uniformly at random.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioBlock {
    pub kind: ScenarioKind,
    pub width: usize,
    pub height: usize,
    /// Jungle population, Battle team size, or Deception home-team size.
    pub agents: usize,
    pub adversaries: usize,
    pub foods: usize,
    pub landmarks: usize,
    pub walls: usize,
    /// Defaults to 200 (Jungle), 300 (Battle) or 100 (Deception).
    pub episode_limit: Option<u32>,
}

impl Default for ScenarioBlock {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Jungle,
            width: 15,
            height: 15,
            agents: 8,
            adversaries: 1,
            foods: 5,
            landmarks: 2,
            walls: 0,
            episode_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerBlock {
    pub algorithm: AlgorithmName,
    pub gamma: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub depth: usize,
    pub batch_episodes: usize,
    pub update: UpdateName,
    pub opponent: Opponent,
}

impl Default for TrainerBlock {
    fn default() -> Self {
        let d = TrainerConfig::default();
        Self {
            algorithm: AlgorithmName::QmarlAc,
            gamma: d.gamma,
            lr_policy: d.lr_policy,
            lr_critic: d.lr_critic,
            depth: d.depth,
            batch_episodes: d.batch_episodes,
            update: UpdateName::Batch,
            opponent: Opponent::SelfPlay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkBlock {
    pub hidden: usize,
    pub rounds: usize,
    pub delta_d: f64,
    pub n_max: usize,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        let d = NetworkConfig::default();
        Self {
            hidden: d.hidden,
            rounds: d.rounds,
            delta_d: d.encoding.delta_d,
            n_max: d.encoding.n_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub seed: u64,
    pub batches: usize,
    pub output_dir: PathBuf,
    /// Run the episodes of a batch on the rayon pool. Results are identical
    /// to sequential mode.
    pub parallel: bool,
    /// Print a batch summary every this many batches.
    pub metrics_every: usize,
    /// Write an intermediate checkpoint every this many batches (0 = final only).
    pub checkpoint_every: usize,
    /// Fill the `seconds` metrics column. Disable for byte-comparable CSVs.
    pub wall_clock: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            seed: 0,
            batches: 100,
            output_dir: PathBuf::from("runs/default"),
            parallel: true,
            metrics_every: 1,
            checkpoint_every: 10,
            wall_clock: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioBlock,
    pub trainer: TrainerBlock,
    pub network: NetworkBlock,
    pub run: RunBlock,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a file, then applies the output-directory
    /// environment override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.run.output_dir = dir.into();
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let core = |e: marl_core::Error| Error::Config(e.to_string());
        self.scenario_config().validate().map_err(core)?;
        self.trainer_config().validate().map_err(core)?;
        self.network_config().validate().map_err(core)?;
        if self.run.batches == 0 {
            return Err(Error::Config("run.batches must be at least 1".into()));
        }
        if self.run.metrics_every == 0 {
            return Err(Error::Config("run.metrics_every must be at least 1".into()));
        }
        if self.scenario.kind == ScenarioKind::Jungle && self.trainer.opponent == Opponent::Random {
            return Err(Error::Config("jungle has a single team; opponent must be \"self\"".into()));
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        let scenario = match s.kind {
            ScenarioKind::Jungle => Scenario::Jungle,
            ScenarioKind::Battle => Scenario::Battle,
            ScenarioKind::Deception => Scenario::Deception,
        };
        let jungle = s.kind == ScenarioKind::Jungle;
        let deception = s.kind == ScenarioKind::Deception;
        ScenarioConfig {
            scenario,
            width: s.width,
            height: s.height,
            agents: s.agents,
            adversaries: if deception { s.adversaries } else { 0 },
            foods: if jungle { s.foods } else { 0 },
            landmarks: if deception { s.landmarks } else { 0 },
            walls: s.walls,
            episode_limit: s.episode_limit.unwrap_or(scenario.default_episode_limit()),
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            gamma: t.gamma,
            lr_policy: t.lr_policy,
            lr_critic: t.lr_critic,
            depth: t.depth,
            batch_episodes: t.batch_episodes,
            algorithm: match t.algorithm {
                AlgorithmName::QmarlAc => Algorithm::GraphAc,
                AlgorithmName::QmarlPg => Algorithm::GraphPg,
                AlgorithmName::VanillaPg => Algorithm::VanillaPg,
            },
            update: match t.update {
                UpdateName::Batch => UpdateTiming::Batch,
                UpdateName::Step => UpdateTiming::Step,
            },
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            hidden: self.network.hidden,
            rounds: self.network.rounds,
            encoding: EdgeEncoding {
                delta_d: self.network.delta_d,
                n_max: self.network.n_max,
            },
        }
    }

    /// Which teams learn.
    pub fn trained_teams(&self) -> Vec<bool> {
        let n = self.scenario_config().num_teams();
        (0..n)
            .map(|t| t == 0 || self.trainer.opponent == Opponent::SelfPlay)
            .collect()
    }
}
