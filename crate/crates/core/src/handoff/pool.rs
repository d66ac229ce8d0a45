//! Per-scope learners: offline training, gating, inference and retraining.

use std::collections::{BTreeMap, BTreeSet};

use super::{validation_gate, EngineConfig, LearnerConfig, Mode, ScopeKey};
use crate::error::Result;
use crate::features::{split, FittedPipeline, PipelineSpec, RawFrame};
use crate::learner::{argmax_beam, predict_proba, train_range, transfer, ModelGraph, TrainConfig, TrainHistory};
use crate::radio::{GlobalBeamId, MeasurementRow};
use crate::world::World;

#[derive(Debug, Clone, PartialEq)]
pub struct ScopeLearner {
    pub fitted: FittedPipeline,
    pub model: ModelGraph,
    /// Offline training run.
    pub history: TrainHistory,
    pub accepted: bool,
    /// Accepted and not suspended by a failed prediction.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerPool {
    pub mode: Mode,
    pub lookback: usize,
    pub learners: BTreeMap<ScopeKey, ScopeLearner>,
    /// Scopes left on the legacy rule, with the reason.
    pub skipped: BTreeMap<ScopeKey, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainRecord {
    pub frame: u32,
    pub scope: ScopeKey,
    pub from_scratch: bool,
    pub history: TrainHistory,
    pub accepted: bool,
}

/// Every report of frames `0..frames-1`, grouped by the scope of its best
/// beam in `(frame, crnti)` order, each labelled with the same UE's best
/// beam one frame later.
pub fn offline_streams(world: &World, mode: Mode) -> Result<BTreeMap<ScopeKey, RawFrame>> {
    let mut rows: BTreeMap<ScopeKey, (Vec<MeasurementRow>, Vec<GlobalBeamId>)> = BTreeMap::new();
    for n in 0..world.frames().saturating_sub(1) {
        for (ue, row) in world.rows[n].iter().enumerate() {
            let key = mode.scope(world.env.codec.bs_of(row.current_beam), row.crnti);
            let entry = rows.entry(key).or_default();
            entry.0.push(*row);
            entry.1.push(world.optimal(n + 1, ue));
        }
    }
    rows.into_iter().map(|(k, (r, t))| Ok((k, RawFrame::with_targets(r, t)?))).collect()
}

/// Windows whose label frame precedes `pivot`.
fn windows_before(rows: &[MeasurementRow], pivot: u32, lookback: usize) -> usize {
    rows.partition_point(|r| r.frame + 1 < pivot).saturating_sub(lookback)
}

fn fit_scope(
    frame: &RawFrame,
    spec: PipelineSpec,
    t_star: usize,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<(FittedPipeline, ModelGraph, TrainHistory)> {
    let fitted = FittedPipeline::fit(frame, spec, t_star)?;
    let sf = fitted.transform(frame, t_star)?;
    let mut model = ModelGraph::fig3(sf.step_width(), sf.num_classes, cfg)?;
    let history = train_range(&mut model, &sf, 0..t_star, t_star..sf.len(), cfg, epochs)?;
    Ok((fitted, model, history))
}

impl LearnerPool {
    /// Trains one learner per scope on windows labelled before `pivot` and
    /// validates on the rest.
    pub fn train(
        mode: Mode,
        lookback: usize,
        streams: &BTreeMap<ScopeKey, RawFrame>,
        pivot: u32,
        cfg: &LearnerConfig,
        train: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let spec = PipelineSpec::causal(lookback, mode.feature_set());
        let mut pool = Self { mode, lookback, learners: BTreeMap::new(), skipped: BTreeMap::new() };
        for (&key, frame) in streams {
            let t_star = windows_before(frame.rows(), pivot, lookback);
            let total = frame.len().saturating_sub(lookback);
            if t_star < cfg.min_scope_rows {
                pool.skipped.insert(key, format!("{t_star} training windows"));
                continue;
            }
            if t_star >= total {
                pool.skipped.insert(key, "no validation windows".into());
                continue;
            }
            let (fitted, model, history) = fit_scope(frame, spec, t_star, train, train.epochs)?;
            let accepted = validation_gate(&history, cfg.validation_threshold);
            pool.learners.insert(key, ScopeLearner { fitted, model, history, accepted, active: accepted });
        }
        Ok(pool)
    }

    /// Union of the input columns of every learner.
    pub fn column_catalog(&self) -> BTreeSet<String> {
        self.learners.values().flat_map(|l| l.fitted.column_catalog()).collect()
    }

    /// Predicted next beam from the latest rows of a scope stream, with the
    /// softmax normalisation error. `None` without a learner.
    pub fn predict(&self, key: &ScopeKey, rows: &[MeasurementRow]) -> Result<Option<(GlobalBeamId, f64)>> {
        let Some(l) = self.learners.get(key) else { return Ok(None) };
        let window = l.fitted.window(rows)?;
        let probs = predict_proba(&l.model, &window)?;
        let deviation = (probs.iter().sum::<f64>() - 1.0).abs();
        let (beam, _) = argmax_beam(&probs, &l.fitted.encoding.vocab)?;
        Ok(Some((beam, deviation)))
    }

    pub fn suspend(&mut self, key: &ScopeKey) {
        if let Some(l) = self.learners.get_mut(key) {
            l.active = false;
        }
    }

    pub fn is_active(&self, key: &ScopeKey) -> bool {
        self.learners.get(key).is_some_and(|l| l.active)
    }
}

/// Refreshes every learner that has new experience. Each experience frame
/// holds up to `lookback` context rows followed by the new rows, and is
/// split like the offline data. Scopes whose C-RNTI was reassigned since
/// the last cycle retrain from scratch; all others fine-tune within the
/// transfer budget. The gate then decides whether the scope acts again.
pub fn retrain_cycle(
    pool: &mut LearnerPool,
    frame: u32,
    experience: &BTreeMap<ScopeKey, RawFrame>,
    reassigned: &BTreeSet<u32>,
    cfg: &EngineConfig,
    train: &TrainConfig,
) -> Result<Vec<RetrainRecord>> {
    let mut records = Vec::new();
    for (key, data) in experience {
        let Some(learner) = pool.learners.get_mut(key) else { continue };
        let spec = learner.fitted.spec;
        let Ok(m_prime) = spec.engineered_rows(data) else { continue };
        let Ok(t) = split(m_prime, cfg.training_fraction, cfg.slots_per_frame) else { continue };
        if t >= m_prime {
            continue;
        }
        let from_scratch = key.crnti.is_some_and(|c| reassigned.contains(&c));
        let history = if from_scratch {
            let (fitted, model, history) = fit_scope(data, spec, t, train, train.epochs)?;
            learner.fitted = fitted;
            learner.model = model;
            history
        } else {
            let sf = learner.fitted.transform(data, t)?;
            let (tuned, history) = transfer(&learner.model, &sf, train, train.transfer_budget())?;
            learner.model = tuned;
            history
        };
        learner.accepted = validation_gate(&history, cfg.learner.validation_threshold);
        learner.active = learner.accepted;
        records.push(RetrainRecord { frame, scope: *key, from_scratch, history, accepted: learner.accepted });
    }
    Ok(records)
}
