//! Serving-beam management: the legacy A3 rule, proactive handoff driven
//! by the learner pool, assessment, fallback and retraining.

mod engine;
mod pool;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::learner::TrainHistory;
use crate::radio::GlobalBeamId;

pub use engine::{run_episode, EpisodeResult, PredictionPair, PredictorKind};
pub use pool::{offline_streams, retrain_cycle, LearnerPool, RetrainRecord, ScopeLearner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    DistributedWithCoords,
    DistributedNoCoords,
    Centralized,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::DistributedWithCoords, Mode::DistributedNoCoords, Mode::Centralized];

    pub fn name(self) -> &'static str {
        match self {
            Mode::DistributedWithCoords => "distributed_with_coords",
            Mode::DistributedNoCoords => "distributed_no_coords",
            Mode::Centralized => "centralized",
        }
    }

    pub fn feature_set(self) -> FeatureSet {
        match self {
            Mode::DistributedWithCoords => FeatureSet::WithCoords,
            Mode::DistributedNoCoords => FeatureSet::NoCoords,
            Mode::Centralized => FeatureSet::Centralized,
        }
    }

    pub fn is_distributed(self) -> bool {
        self != Mode::Centralized
    }

    /// Learner scope of a report whose best beam sits on `bs`.
    pub fn scope(self, bs: usize, crnti: u32) -> ScopeKey {
        ScopeKey { bs, crnti: self.is_distributed().then_some(crnti) }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// One learner per `(bs, crnti)` when distributed, per `bs` when centralized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScopeKey {
    pub bs: usize,
    pub crnti: Option<u32>,
}

impl fmt::Display for ScopeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.crnti {
            Some(c) => write!(f, "bs{}-ue{c}", self.bs),
            None => write!(f, "bs{}", self.bs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegacyConfig {
    pub a3_offset_db: f64,
    pub time_to_trigger_ms: f64,
    pub rrc_report_interval_ms: f64,
    pub llm_report_interval_ms: f64,
}

impl Default for LegacyConfig {
    fn default() -> Self {
        Self { a3_offset_db: 3.0, time_to_trigger_ms: 160.0, rrc_report_interval_ms: 120.0, llm_report_interval_ms: 10.0 }
    }
}

impl LegacyConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.a3_offset_db.is_finite() {
            return Err(Error::Config("A3 offset must be finite".into()));
        }
        if !(self.time_to_trigger_ms >= 0.0) {
            return Err(Error::Config("time-to-trigger must be non-negative".into()));
        }
        if !(self.rrc_report_interval_ms >= 120.0) {
            return Err(Error::Config("RRC report interval must be at least 120 ms".into()));
        }
        if !(self.llm_report_interval_ms >= 10.0) {
            return Err(Error::Config("LLM report interval must be at least 10 ms".into()));
        }
        Ok(())
    }

    /// Consecutive samples spaced `sample_ms` apart that span the TTT.
    pub fn samples_for_ttt(&self, sample_ms: f64) -> usize {
        (self.time_to_trigger_ms / sample_ms + 1e-9).floor() as usize + 1
    }
}

/// A3 entry rule on per-frame RSRP histories (oldest first, equal
/// lengths). A neighbor qualifies when it beats the serving beam by at
/// least the offset at every sample spanning the time-to-trigger; the one
/// with the strongest latest RSRP wins, earlier neighbors on ties.
pub fn legacy_decide(
    serving: &[f64],
    neighbors: &[(GlobalBeamId, Vec<f64>)],
    sample_ms: f64,
    cfg: &LegacyConfig,
) -> Option<GlobalBeamId> {
    let need = cfg.samples_for_ttt(sample_ms);
    if serving.len() < need {
        return None;
    }
    let tail = serving.len() - need;
    let mut best: Option<(GlobalBeamId, f64)> = None;
    for (beam, series) in neighbors {
        if series.len() != serving.len() {
            continue;
        }
        let holds = series[tail..].iter().zip(&serving[tail..]).all(|(n, s)| n - s >= cfg.a3_offset_db);
        let latest = series[series.len() - 1];
        if holds && best.is_none_or(|(_, p)| latest > p) {
            best = Some((*beam, latest));
        }
    }
    best.map(|(b, _)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Legacy,
    Proactive,
    Fallback,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Legacy => "legacy",
            Origin::Proactive => "proactive",
            Origin::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Good,
    Bad,
    Rlf,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Good => "good",
            Outcome::Bad => "bad",
            Outcome::Rlf => "rlf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandoffEvent {
    pub frame: u32,
    pub crnti: u32,
    pub source: GlobalBeamId,
    pub target: GlobalBeamId,
    pub origin: Origin,
    pub intra_bs: bool,
    pub outcome: Outcome,
}

pub const EVENT_COLUMNS: [&str; 7] = ["frame", "crnti", "source", "target", "origin", "intra_bs", "outcome"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionAssessment {
    pub predicted: GlobalBeamId,
    pub realized_optimal: GlobalBeamId,
    /// Post-switch minus pre-switch RSRP.
    pub rsrp_delta_db: f64,
    pub verdict: Outcome,
}

/// Verdict on a switch from realized measurements after it took effect.
/// `pre_dbm` is what the old beam would have delivered at the same frame.
pub fn assess(
    predicted: GlobalBeamId,
    realized_optimal: GlobalBeamId,
    pre_dbm: f64,
    post_dbm: f64,
    degradation_db: f64,
    rlf_threshold_dbm: f64,
) -> PredictionAssessment {
    let verdict = if post_dbm < rlf_threshold_dbm {
        Outcome::Rlf
    } else if post_dbm >= pre_dbm - degradation_db {
        Outcome::Good
    } else {
        Outcome::Bad
    };
    PredictionAssessment { predicted, realized_optimal, rsrp_delta_db: post_dbm - pre_dbm, verdict }
}

/// Accepts a learner when its final validation accuracy reaches the
/// threshold. An empty history is never accepted.
pub fn validation_gate(history: &TrainHistory, threshold: f64) -> bool {
    history.final_val_acc().is_some_and(|a| a >= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub validation_threshold: f64,
    /// Largest RSRP drop a switch may cause and still count as good.
    pub degradation_db: f64,
    pub intra_recovery_frames: u32,
    pub inter_recovery_frames: u32,
    pub retrain_interval_frames: u32,
    /// Scopes with fewer training windows stay on the legacy rule.
    pub min_scope_rows: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            validation_threshold: 0.7,
            degradation_db: 3.0,
            intra_recovery_frames: 5,
            inter_recovery_frames: 10,
            retrain_interval_frames: 100,
            min_scope_rows: 50,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.validation_threshold) {
            return Err(Error::Config("validation threshold must lie in [0, 1]".into()));
        }
        if !(self.degradation_db >= 0.0) {
            return Err(Error::Config("degradation threshold must be non-negative".into()));
        }
        if self.intra_recovery_frames == 0 || self.inter_recovery_frames == 0 {
            return Err(Error::Config("recovery delays must be at least one frame".into()));
        }
        if self.retrain_interval_frames == 0 {
            return Err(Error::Config("retrain interval must be positive".into()));
        }
        if self.min_scope_rows == 0 {
            return Err(Error::Config("min_scope_rows must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub legacy: LegacyConfig,
    pub learner: LearnerConfig,
    pub training_fraction: f64,
    pub slots_per_frame: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { legacy: LegacyConfig::default(), learner: LearnerConfig::default(), training_fraction: 0.6, slots_per_frame: 10 }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.legacy.validate()?;
        self.learner.validate()?;
        if !(self.training_fraction > 0.0 && self.training_fraction < 1.0) {
            return Err(Error::Config("training fraction must lie in (0, 1)".into()));
        }
        if self.slots_per_frame == 0 {
            return Err(Error::Config("slots per frame must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingSwitch {
    pub target: GlobalBeamId,
    pub origin: Origin,
    pub scope: ScopeKey,
}

/// Per-UE link state inside an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub serving: GlobalBeamId,
    pub llm_paused: bool,
    /// Frame at which an ongoing recovery completes.
    pub recovery_at: u32,
    /// Consecutive frames with serving RSRP under the RLF threshold.
    pub low_run: u32,
    pub pending: Option<PendingSwitch>,
    /// Latest per-frame RSRP of every beam slot, oldest first.
    pub history: VecDeque<Vec<f64>>,
}

impl LinkState {
    pub fn new(serving: GlobalBeamId) -> Self {
        Self { serving, llm_paused: false, recovery_at: 0, low_run: 0, pending: None, history: VecDeque::new() }
    }

    /// Starts recovery at `frame`; a UE already recovering keeps its timer.
    /// Returns whether a new recovery began.
    pub fn fallback(&mut self, frame: u32, delay: u32) -> bool {
        if self.llm_paused {
            return false;
        }
        self.llm_paused = true;
        self.recovery_at = frame + delay;
        self.pending = None;
        self.low_run = 0;
        self.history.clear();
        true
    }

    /// Completes recovery if due, attaching to `optimal`. Returns the
    /// fallback event.
    pub fn try_recover(&mut self, frame: u32, crnti: u32, optimal: GlobalBeamId, same_bs: bool) -> Option<HandoffEvent> {
        if !self.llm_paused || frame < self.recovery_at {
            return None;
        }
        let event = HandoffEvent {
            frame,
            crnti,
            source: self.serving,
            target: optimal,
            origin: Origin::Fallback,
            intra_bs: same_bs,
            outcome: Outcome::Good,
        };
        self.serving = optimal;
        self.llm_paused = false;
        Some(event)
    }

    pub fn record(&mut self, rsrp_dbm: &[f64], keep: usize) {
        if self.history.len() == keep {
            self.history.pop_front();
        }
        self.history.push_back(rsrp_dbm.to_vec());
    }
}

#[cfg(test)]
mod tests;
