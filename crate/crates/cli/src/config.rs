//! Run configuration: TOML file with defaults for every key; command-line
//! flags override whatever the file sets.

use std::path::Path;

use anyhow::{Context, Result};
use segquality::cloud::SensorSpec;
use segquality::dataset::DEFAULT_SP_MIN;
use segquality::meta::{Hyperparams, ModelKind, Task};
use segquality::synth::{CorruptionConfig, SceneConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Segments with fewer projected points are excluded.
    pub sp_min: usize,
    pub folds: usize,
    pub task: Task,
    pub kind: ModelKind,
    /// Horizontal wraparound in segment adjacency.
    pub wrap: bool,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Overrides the sensor recorded in the data directory.
    pub sensor: Option<SensorSpec>,
    pub gbt: segquality::meta::GbtParams,
    pub linear: segquality::meta::LinearParams,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames: u32,
    pub groups: u32,
    pub scene: SceneConfig,
    pub corruption: CorruptionConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { frames: 200, groups: 10, scene: SceneConfig::default(), corruption: CorruptionConfig::default() }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sp_min: DEFAULT_SP_MIN,
            folds: 10,
            task: Task::Classify,
            kind: ModelKind::Gbt,
            wrap: true,
            threads: 0,
            sensor: None,
            gbt: Default::default(),
            linear: Default::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn hyper(&self) -> Hyperparams {
        Hyperparams { gbt: self.gbt, linear: self.linear }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 5\n[gbt]\nrounds = 7\n[synth.corruption]\nerosion = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.gbt.rounds, 7);
        assert_eq!(cfg.gbt.max_depth, 6);
        assert_eq!(cfg.synth.corruption.erosion, 0.5);
        assert_eq!(cfg.sp_min, 10);
        assert_eq!(cfg.folds, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sedd = 5\n").is_err());
    }

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
