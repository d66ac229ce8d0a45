//! Frame-by-frame replay of a simulated world under one handoff policy.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::pool::{offline_streams, retrain_cycle, LearnerPool, RetrainRecord};
use super::{
    assess, legacy_decide, EngineConfig, HandoffEvent, LinkState, Mode, Origin, Outcome, PendingSwitch, ScopeKey,
};
use crate::error::{Error, Result};
use crate::features::{split, RawFrame};
use crate::learner::TrainConfig;
use crate::radio::{GlobalBeamId, MeasurementRow, BEAMS_PER_BS};
use crate::seeding::{self, TAG_PREDICTOR};
use crate::world::World;

/// Source of proactive predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Learned,
    /// Knows the next optimal beam.
    Perfect,
    /// Uniform over the eight beams of the reporting BS.
    Random,
}

/// A prediction for frame `frame`, made from reports up to `input_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionPair {
    pub frame: u32,
    pub input_frame: u32,
    pub crnti: u32,
    pub scope: ScopeKey,
    pub truth: GlobalBeamId,
    pub predicted: GlobalBeamId,
    /// Whether the engine followed the prediction.
    pub acted: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub mode: Mode,
    pub lookback: usize,
    pub predictor: PredictorKind,
    /// First frame of the validation span.
    pub pivot: u32,
    pub events: Vec<HandoffEvent>,
    pub pairs: Vec<PredictionPair>,
    pub pool: Option<LearnerPool>,
    pub retrains: Vec<RetrainRecord>,
    /// `serving[frame][ue]`.
    pub serving: Vec<Vec<GlobalBeamId>>,
    /// `reported[frame][ue]`: whether the UE's report entered a scope stream.
    pub reported: Vec<Vec<bool>>,
    pub fallbacks: usize,
    pub rlf_detections: usize,
    pub interruption_frames: usize,
    pub max_softmax_deviation: f64,
}

struct Replay<'a> {
    world: &'a World,
    cfg: &'a EngineConfig,
    live: BTreeMap<ScopeKey, Vec<MeasurementRow>>,
    /// Stub predictors only: scopes suspended until the next cycle.
    suspended: BTreeSet<ScopeKey>,
}

impl Replay<'_> {
    fn recovery_delay(&self, serving: GlobalBeamId, optimal: GlobalBeamId) -> u32 {
        let codec = &self.world.env.codec;
        if codec.bs_of(serving) == codec.bs_of(optimal) {
            self.cfg.learner.intra_recovery_frames
        } else {
            self.cfg.learner.inter_recovery_frames
        }
    }

    /// New reports of every scope since `from` whose labels are known at
    /// `frame`, led by up to `lookback` earlier reports as context.
    fn experience(&self, from: u32, frame: u32, lookback: usize) -> Result<BTreeMap<ScopeKey, RawFrame>> {
        let mut out = BTreeMap::new();
        for (key, rows) in &self.live {
            let start = rows.partition_point(|r| r.frame + 1 < from);
            let end = rows.partition_point(|r| r.frame + 1 < frame);
            if end <= start {
                continue;
            }
            let slice = &rows[start.saturating_sub(lookback)..end];
            let targets = slice
                .iter()
                .map(|r| self.world.optimal(r.frame as usize + 1, ue_index(self.world, r.crnti)))
                .collect();
            out.insert(*key, RawFrame::with_targets(slice.to_vec(), targets)?);
        }
        Ok(out)
    }
}

fn ue_index(world: &World, crnti: u32) -> usize {
    // C-RNTIs are assigned 1..=u in UE order and never reassigned.
    debug_assert_eq!(world.rows[0][crnti as usize - 1].crnti, crnti);
    crnti as usize - 1
}

/// Replays `world` under `mode`: legacy A3 until the validation span, then
/// proactive handoff for every scope with an accepted learner, with
/// assessment, fallback and periodic retraining.
pub fn run_episode(
    world: &World,
    mode: Mode,
    lookback: usize,
    predictor: PredictorKind,
    cfg: &EngineConfig,
    train: &TrainConfig,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let frames = world.frames();
    let num_ues = world.num_ues();
    let frame_ms = world.frame_duration_s * 1e3;
    let pivot = split(frames, cfg.training_fraction, cfg.slots_per_frame)? as u32;
    if pivot as usize >= frames {
        return Err(Error::InsufficientData("episode leaves no validation frames".into()));
    }
    let rrc_frames = ((cfg.legacy.rrc_report_interval_ms / frame_ms).round() as usize).max(1);
    let keep = cfg.legacy.samples_for_ttt(frame_ms);
    let rlf_threshold = world.env.cfg.rlf_threshold_dbm;
    let rlf_frames = world.env.cfg.rlf_consecutive_frames;
    let codec = world.env.codec;

    let mut pool = match predictor {
        PredictorKind::Learned => {
            let streams = offline_streams(world, mode)?;
            Some(LearnerPool::train(mode, lookback, &streams, pivot, &cfg.learner, train)?)
        }
        _ => None,
    };
    let mut rng = seeding::stream(&[world.env.seed, TAG_PREDICTOR, mode as u64, lookback as u64]);
    let mut replay = Replay { world, cfg, live: BTreeMap::new(), suspended: BTreeSet::new() };
    let mut links: Vec<LinkState> = (0..num_ues).map(|i| LinkState::new(world.optimal(0, i))).collect();
    let mut out = EpisodeResult {
        mode,
        lookback,
        predictor,
        pivot,
        events: Vec::new(),
        pairs: Vec::new(),
        pool: None,
        retrains: Vec::new(),
        serving: Vec::with_capacity(frames),
        reported: Vec::with_capacity(frames),
        fallbacks: 0,
        rlf_detections: 0,
        interruption_frames: 0,
        max_softmax_deviation: 0.0,
    };
    let interval = cfg.learner.retrain_interval_frames;
    let mut last_cycle = pivot;

    for n in 0..frames {
        let frame = n as u32;
        if frame > pivot && (frame - pivot).is_multiple_of(interval) {
            if let Some(pool) = pool.as_mut() {
                let exp = replay.experience(last_cycle, frame, lookback)?;
                out.retrains.extend(retrain_cycle(pool, frame, &exp, &BTreeSet::new(), cfg, train)?);
            }
            replay.suspended.clear();
            last_cycle = frame;
        }
        let mut serving_now = Vec::with_capacity(num_ues);
        let mut reported_now = Vec::with_capacity(num_ues);
        for (i, link) in links.iter_mut().enumerate() {
            let row = world.rows[n][i];
            let optimal = row.current_beam;
            if link.llm_paused {
                let same_bs = codec.bs_of(link.serving) == codec.bs_of(optimal);
                if let Some(ev) = link.try_recover(frame, row.crnti, optimal, same_bs) {
                    out.events.push(ev);
                } else {
                    out.interruption_frames += 1;
                    serving_now.push(link.serving);
                    reported_now.push(false);
                    continue;
                }
            }
            let snap = world.snapshot(n, i)?;
            let rsrp = |b: GlobalBeamId| -> Result<f64> { Ok(snap.rsrp_dbm[world.env.slot_of(b)?]) };

            if let Some(p) = link.pending.take() {
                let a = assess(
                    p.target,
                    optimal,
                    rsrp(link.serving)?,
                    rsrp(p.target)?,
                    cfg.learner.degradation_db,
                    rlf_threshold,
                );
                out.events.push(HandoffEvent {
                    frame,
                    crnti: row.crnti,
                    source: link.serving,
                    target: p.target,
                    origin: p.origin,
                    intra_bs: codec.bs_of(link.serving) == codec.bs_of(p.target),
                    outcome: a.verdict,
                });
                link.serving = p.target;
                if p.origin == Origin::Proactive && a.verdict != Outcome::Good {
                    match pool.as_mut() {
                        Some(pool) => pool.suspend(&p.scope),
                        None => {
                            replay.suspended.insert(p.scope);
                        }
                    }
                    let delay = replay.recovery_delay(link.serving, optimal);
                    if link.fallback(frame, delay) {
                        out.fallbacks += 1;
                    }
                }
            }
            if !link.llm_paused {
                link.low_run = if rsrp(link.serving)? < rlf_threshold { link.low_run + 1 } else { 0 };
                if link.low_run >= rlf_frames {
                    out.rlf_detections += 1;
                    let delay = replay.recovery_delay(link.serving, optimal);
                    if link.fallback(frame, delay) {
                        out.fallbacks += 1;
                    }
                }
            }
            serving_now.push(link.serving);
            if link.llm_paused {
                out.interruption_frames += 1;
                reported_now.push(false);
                continue;
            }
            reported_now.push(true);

            let key = mode.scope(codec.bs_of(optimal), row.crnti);
            let stream = replay.live.entry(key).or_default();
            stream.push(row);
            link.record(&snap.rsrp_dbm, keep);
            if n + 1 >= frames {
                continue;
            }

            let mut proactive = false;
            if frame + 1 >= pivot {
                let truth = world.optimal(n + 1, i);
                let guess = match predictor {
                    PredictorKind::Learned => {
                        let pool = pool.as_ref().expect("learned episodes own a pool");
                        if stream.len() > lookback {
                            pool.predict(&key, stream)?.map(|(b, dev)| {
                                out.max_softmax_deviation = out.max_softmax_deviation.max(dev);
                                (b, pool.is_active(&key))
                            })
                        } else {
                            None
                        }
                    }
                    PredictorKind::Perfect => Some((truth, !replay.suspended.contains(&key))),
                    PredictorKind::Random => {
                        let local = rng.random_range(0..BEAMS_PER_BS);
                        Some((codec.encode(key.bs, local)?, !replay.suspended.contains(&key)))
                    }
                };
                if let Some((predicted, acted)) = guess {
                    out.pairs.push(PredictionPair {
                        frame: frame + 1,
                        input_frame: frame,
                        crnti: row.crnti,
                        scope: key,
                        truth,
                        predicted,
                        acted,
                    });
                    if acted {
                        proactive = true;
                        if predicted != link.serving {
                            link.pending = Some(PendingSwitch { target: predicted, origin: Origin::Proactive, scope: key });
                        }
                    }
                }
            }
            if !proactive && n % rrc_frames == 0 {
                let series = |slot: usize| link.history.iter().map(|s| s[slot]).collect::<Vec<f64>>();
                let serving_slot = world.env.slot_of(link.serving)?;
                let neighbors: Vec<(GlobalBeamId, Vec<f64>)> = (0..world.env.num_slots())
                    .filter(|&s| s != serving_slot)
                    .map(|s| (world.env.beam_of_slot(s), series(s)))
                    .collect();
                if let Some(target) = legacy_decide(&series(serving_slot), &neighbors, frame_ms, &cfg.legacy) {
                    link.pending = Some(PendingSwitch { target, origin: Origin::Legacy, scope: key });
                }
            }
        }
        out.serving.push(serving_now);
        out.reported.push(reported_now);
    }
    out.pool = pool;
    Ok(out)
}
