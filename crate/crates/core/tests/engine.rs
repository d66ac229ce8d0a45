use std::collections::{BTreeMap, BTreeSet};

use beamho::features::{split, RawFrame};
use beamho::grid::{GridConfig, MobilityConfig};
use beamho::handoff::{
    offline_streams, retrain_cycle, run_episode, EngineConfig, LearnerPool, Mode, Origin, PredictorKind, ScopeKey,
};
use beamho::learner::{evaluate, TrainConfig};
use beamho::radio::RadioConfig;
use beamho::world::World;

fn world(num_ues: usize, frames: usize, seed: u64) -> World {
    let grid = GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() };
    World::simulate(grid, MobilityConfig::default(), RadioConfig::default(), num_ues, frames, 0.01, seed).unwrap()
}

fn quick_train() -> TrainConfig {
    TrainConfig { epochs: 6, depth: 3, width: 8, ..Default::default() }
}

#[test]
fn perfect_predictor_never_misses_or_falls_back() {
    let w = world(8, 300, 1);
    let ep = run_episode(&w, Mode::DistributedNoCoords, 0, PredictorKind::Perfect, &EngineConfig::default(), &quick_train())
        .unwrap();
    assert!(!ep.pairs.is_empty());
    assert!(ep.pairs.iter().all(|p| p.truth == p.predicted && p.acted));
    assert_eq!((ep.fallbacks, ep.rlf_detections, ep.interruption_frames), (0, 0, 0));
    // Every proactive switch lands on the optimal beam of its frame.
    for e in ep.events.iter().filter(|e| e.origin == Origin::Proactive) {
        assert_eq!(e.target, w.optimal(e.frame as usize, e.crnti as usize - 1));
    }
}

#[test]
fn episodes_are_deterministic() {
    let w = world(6, 240, 2);
    let cfg = EngineConfig::default();
    for predictor in [PredictorKind::Random, PredictorKind::Learned] {
        let a = run_episode(&w, Mode::Centralized, 2, predictor, &cfg, &quick_train()).unwrap();
        let b = run_episode(&w, Mode::Centralized, 2, predictor, &cfg, &quick_train()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.serving, b.serving);
        assert_eq!(a.pool, b.pool);
    }
}

#[test]
fn serving_changes_match_events_and_paused_ues_stay_silent() {
    let w = world(8, 300, 3);
    // The random predictor fails often, so fallbacks and pauses occur.
    let ep = run_episode(&w, Mode::DistributedNoCoords, 1, PredictorKind::Random, &EngineConfig::default(), &quick_train())
        .unwrap();
    assert!(ep.fallbacks > 0 && ep.interruption_frames > 0);

    let mut switches: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for e in ep.events.iter().filter(|e| e.source != e.target) {
        *switches.entry((e.frame, e.crnti)).or_default() += 1;
    }
    let mut changes = 0;
    for n in 1..w.frames() {
        for ue in 0..w.num_ues() {
            if ep.serving[n][ue] != ep.serving[n - 1][ue] {
                changes += 1;
                assert_eq!(switches.get(&(n as u32, ue as u32 + 1)), Some(&1), "frame {n} ue {ue}");
            }
        }
    }
    assert_eq!(changes, switches.values().sum::<usize>());

    let paused: usize = ep.reported.iter().flatten().filter(|&&r| !r).count();
    assert_eq!(paused, ep.interruption_frames);
    for p in &ep.pairs {
        assert!(ep.reported[p.input_frame as usize][p.crnti as usize - 1]);
        assert_eq!(p.input_frame + 1, p.frame);
        assert!(p.frame >= ep.pivot);
        assert_eq!(p.truth, w.optimal(p.frame as usize, p.crnti as usize - 1));
    }
}

#[test]
fn centralized_learners_see_no_identity() {
    let w = world(8, 300, 4);
    let cfg = EngineConfig::default();
    let catalog = |mode| {
        let ep = run_episode(&w, mode, 1, PredictorKind::Learned, &cfg, &quick_train()).unwrap();
        let pool = ep.pool.unwrap();
        assert!(!pool.learners.is_empty(), "{mode}");
        pool.column_catalog()
    };
    let has = |cols: &BTreeSet<String>, name: &str| cols.iter().any(|c| c.split('@').next().unwrap().trim_start_matches("d:") == name);
    let central = catalog(Mode::Centralized);
    assert!(!has(&central, "crnti") && !has(&central, "ue_x_m") && !has(&central, "ue_y_m"));
    let coords = catalog(Mode::DistributedWithCoords);
    assert!(has(&coords, "crnti") && has(&coords, "ue_x_m") && has(&coords, "ue_y_m"));
    let plain = catalog(Mode::DistributedNoCoords);
    assert!(has(&plain, "crnti") && !has(&plain, "ue_x_m"));
}

/// Reports of `scope` with label frame in `[from, to)`, with next-frame targets.
fn experience(w: &World, mode: Mode, scope: ScopeKey, from: usize, to: usize) -> RawFrame {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for n in from.saturating_sub(1)..to - 1 {
        for (ue, r) in w.rows[n].iter().enumerate() {
            if mode.scope(w.env.codec.bs_of(r.current_beam), r.crnti) == scope {
                rows.push(*r);
                targets.push(w.optimal(n + 1, ue));
            }
        }
    }
    RawFrame::with_targets(rows, targets).unwrap()
}

#[test]
fn retrain_cycle_paths() {
    let w = world(8, 600, 5);
    let cfg = EngineConfig::default();
    let train = TrainConfig { epochs: 20, depth: 3, width: 8, ..Default::default() };
    let pivot = split(w.frames(), cfg.training_fraction, cfg.slots_per_frame).unwrap() as u32;

    for mode in [Mode::Centralized, Mode::DistributedNoCoords] {
        let streams = offline_streams(&w, mode).unwrap();
        let mut pool = LearnerPool::train(mode, 1, &streams, pivot, &cfg.learner, &train).unwrap();
        let key = *pool.learners.keys().next().expect("a trained scope");

        // No new experience: nothing changes.
        let before = pool.clone();
        assert!(retrain_cycle(&mut pool, 500, &BTreeMap::new(), &BTreeSet::new(), &cfg, &train).unwrap().is_empty());
        assert_eq!(pool, before);

        let data = experience(&w, mode, key, pivot as usize, w.frames());
        let exp = BTreeMap::from([(key, data.clone())]);
        let t = split(data.len() - 1, cfg.training_fraction, cfg.slots_per_frame).unwrap();
        let sf = pool.learners[&key].fitted.transform(&data, t).unwrap();
        let loss_before = evaluate(&pool.learners[&key].model, &sf, 0..t).unwrap().0.mean_loss;

        let recs = retrain_cycle(&mut pool, 600, &exp, &BTreeSet::new(), &cfg, &train).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(!recs[0].from_scratch);
        assert_eq!(recs[0].history.len(), train.transfer_budget());
        assert_eq!(pool.learners[&key].accepted, recs[0].accepted);
        let loss_after = evaluate(&pool.learners[&key].model, &sf, 0..t).unwrap().0.mean_loss;
        assert!(loss_after <= 1.05 * loss_before, "{mode}: {loss_before} -> {loss_after}");

        // A reassigned identifier restarts its per-pair learner from scratch;
        // centralized scopes carry no identifier and always fine-tune.
        let all: BTreeSet<u32> = (1..=w.num_ues() as u32).collect();
        let recs = retrain_cycle(&mut pool, 600, &exp, &all, &cfg, &train).unwrap();
        assert_eq!(recs[0].from_scratch, key.crnti.is_some());
        let expected = if key.crnti.is_some() { train.epochs } else { train.transfer_budget() };
        assert_eq!(recs[0].history.len(), expected);
    }
}
