//! TOML experiment files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, Mode};
use crate::cost::CostWeights;
use crate::critic::CriticConfig;
use crate::dynamics::RobotParams;
use crate::error::{Error, Result};
use crate::gait::GaitConfig;
use crate::sim::{EpisodeConfig, EpisodeSettings, PlantConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub horizons: Vec<usize>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            horizons: vec![1, 2, 3, 4, 5, 6, 8],
            modes: vec![Mode::Mpc, Mode::Rql],
            seeds: vec![0, 1, 2],
        }
    }
}

impl SweepSettings {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.horizons.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            out.push("sweep grid must have at least one horizon, mode and seed".to_string());
        }
        if self.horizons.contains(&0) {
            out.push("sweep.horizons must be >= 1".to_string());
        }
        out
    }
}

/// An episode configuration plus the sweep grid, as stored in TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub robot: RobotParams,
    pub gait: GaitConfig,
    pub cost: CostWeights,
    pub controller: ControllerConfig,
    pub critic: CriticConfig,
    pub plant: PlantConfig,
    pub episode: EpisodeSettings,
    pub sweep: SweepSettings,
}

impl ExperimentConfig {
    pub fn new(base: EpisodeConfig, sweep: SweepSettings) -> Self {
        Self {
            robot: base.robot,
            gait: base.gait,
            cost: base.cost,
            controller: base.controller,
            critic: base.critic,
            plant: base.plant,
            episode: base.episode,
            sweep,
        }
    }

    /// The single-episode part of the experiment.
    pub fn base(&self) -> EpisodeConfig {
        EpisodeConfig {
            robot: self.robot,
            gait: self.gait,
            cost: self.cost,
            controller: self.controller,
            critic: self.critic,
            plant: self.plant,
            episode: self.episode,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.base().violations();
        out.extend(self.sweep.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}
