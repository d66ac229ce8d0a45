//! Experiment configuration: TOML sections layered over a named preset.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridConfig, MobilityConfig};
use crate::handoff::{EngineConfig, LearnerConfig, LegacyConfig, Mode};
use crate::learner::TrainConfig;
use crate::radio::RadioConfig;

pub const MAX_LOOKBACK: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_ues: usize,
    pub frames: usize,
    pub frame_duration_ms: f64,
    pub training_fraction: f64,
    pub slots_per_frame: usize,
    pub modes: Vec<Mode>,
    pub lookbacks: Vec<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_ues: 400,
            frames: 5000,
            frame_duration_ms: 10.0,
            training_fraction: 0.6,
            slots_per_frame: 10,
            modes: Mode::ALL.to_vec(),
            lookbacks: (0..=MAX_LOOKBACK).collect(),
        }
    }
}

/// Full-scale defaults; see [`ExperimentConfig::desk`] for the small preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub mobility: MobilityConfig,
    pub radio: RadioConfig,
    pub legacy: LegacyConfig,
    pub learner: LearnerConfig,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// 2×2 grid, 16 UEs, 500 frames, lookbacks {0, 2, 4, 7, 8}, 48 epochs.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.grid.blocks_x = 2;
        c.grid.blocks_y = 2;
        c.scenario.num_ues = 16;
        c.scenario.frames = 500;
        c.scenario.lookbacks = vec![0, 2, 4, 7, 8];
        c.training.epochs = 48;
        c
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    /// Parses `text` as overrides on top of `base`.
    pub fn from_toml_over(base: &Self, text: &str) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e| Error::Parse(format!("config: {e}")))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, overrides);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &Self) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_over(base, &text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            legacy: self.legacy.clone(),
            learner: self.learner.clone(),
            training_fraction: self.scenario.training_fraction,
            slots_per_frame: self.scenario.slots_per_frame,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.num_ues == 0 {
            return Err(Error::Config("num_ues must be positive".into()));
        }
        if s.frames < 2 {
            return Err(Error::Config("at least two frames are required".into()));
        }
        if !(s.frame_duration_ms > 0.0) {
            return Err(Error::Config("frame duration must be positive".into()));
        }
        if s.modes.is_empty() {
            return Err(Error::Config("no modes selected".into()));
        }
        if s.lookbacks.is_empty() {
            return Err(Error::Config("no lookbacks selected".into()));
        }
        if let Some(k) = s.lookbacks.iter().find(|&&k| k > MAX_LOOKBACK) {
            return Err(Error::Config(format!("lookback {k} outside 0..={MAX_LOOKBACK}")));
        }
        let distinct_k: BTreeSet<_> = s.lookbacks.iter().collect();
        let distinct_m: BTreeSet<_> = s.modes.iter().collect();
        if distinct_k.len() != s.lookbacks.len() || distinct_m.len() != s.modes.len() {
            return Err(Error::Config("modes and lookbacks must not repeat".into()));
        }
        self.grid.validate()?;
        self.mobility.validate()?;
        self.radio.validate()?;
        self.training.validate()?;
        self.engine().validate()?;
        let pivot = crate::features::split(s.frames, s.training_fraction, s.slots_per_frame)
            .map_err(|e| Error::Config(format!("training split: {e}")))?;
        if pivot >= s.frames {
            return Err(Error::Config("training split leaves no validation frames".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ExperimentConfig::desk().validate().unwrap();
        let p = ExperimentConfig::paper();
        p.validate().unwrap();
        assert_eq!((p.grid.blocks_x * p.grid.blocks_y, p.scenario.num_ues, p.scenario.frames), (32, 400, 5000));
        assert_eq!(p.scenario.lookbacks.len(), 11);
        assert_eq!(p.training.epochs, 192);
    }

    #[test]
    fn toml_overrides_layer_on_preset() {
        let c = ExperimentConfig::from_toml_over(
            &ExperimentConfig::desk(),
            "[scenario]\nseed = 9\nmodes = [\"centralized\"]\n[training]\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(c.scenario.seed, 9);
        assert_eq!(c.scenario.modes, vec![Mode::Centralized]);
        assert_eq!(c.training.epochs, 3);
        assert_eq!(c.scenario.num_ues, 16);
        assert_eq!(c.grid.blocks_x, 2);
    }

    #[test]
    fn echo_roundtrips() {
        let d = ExperimentConfig::desk();
        let back = ExperimentConfig::from_toml_over(&ExperimentConfig::paper(), &d.to_toml().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let base = ExperimentConfig::desk();
        for text in [
            "[scenario]\nlookbacks = [11]",
            "[scenario]\nlookbacks = [2, 2]",
            "[scenario]\nnum_ues = 0",
            "[legacy]\nrrc_report_interval_ms = 50.0",
            "[scenario]\nbogus = 1",
            "[scenario]\nmodes = [\"hybrid\"]",
            "not toml at all [",
            "[scenario]\nframes = 10",
        ] {
            let err = ExperimentConfig::from_toml_over(&base, text).unwrap_err();
            assert!(err.is_config(), "{text}: {err}");
        }
    }
}
