use super::*;
use proptest::prelude::*;

const SERVING: GlobalBeamId = GlobalBeamId(0);

fn constant(v: f64, n: usize) -> Vec<f64> {
    vec![v; n]
}

/// Samples every 10 ms; `margin` over a flat serving beam for the last
/// `held` samples, zero before.
fn neighbor(margin: f64, held: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + held >= n { -80.0 + margin } else { -80.0 }).collect()
}

#[test]
fn a3_fires_after_sustained_offset() {
    let cfg = LegacyConfig::default();
    let serving = constant(-80.0, 30);
    // 200 ms of +4 dB is 21 samples; 160 ms TTT needs 17.
    let n = vec![(GlobalBeamId(9), neighbor(4.0, 21, 30))];
    assert_eq!(legacy_decide(&serving, &n, 10.0, &cfg), Some(GlobalBeamId(9)));
}

#[test]
fn a3_ignores_neighbor_below_offset() {
    let cfg = LegacyConfig::default();
    let n = vec![(GlobalBeamId(9), constant(-78.0, 40))];
    assert_eq!(legacy_decide(&constant(-80.0, 40), &n, 10.0, &cfg), None);
}

#[test]
fn a3_needs_full_time_to_trigger() {
    let cfg = LegacyConfig::default();
    // 100 ms is 11 samples.
    let n = vec![(GlobalBeamId(9), neighbor(4.0, 11, 30))];
    assert_eq!(legacy_decide(&constant(-80.0, 30), &n, 10.0, &cfg), None);
    assert_eq!(legacy_decide(&constant(-80.0, 10), &[(GlobalBeamId(9), constant(0.0, 10))], 10.0, &cfg), None);
}

#[test]
fn a3_picks_strongest_qualifier() {
    let cfg = LegacyConfig::default();
    let n = vec![
        (GlobalBeamId(1), constant(-70.0, 20)),
        (GlobalBeamId(2), constant(-65.0, 20)),
        (GlobalBeamId(3), constant(-65.0, 20)),
        (GlobalBeamId(4), neighbor(30.0, 5, 20)),
    ];
    assert_eq!(legacy_decide(&constant(-80.0, 20), &n, 10.0, &cfg), Some(GlobalBeamId(2)));
}

#[test]
fn legacy_config_floors() {
    assert!(LegacyConfig::default().validate().is_ok());
    assert!(LegacyConfig { rrc_report_interval_ms: 100.0, ..Default::default() }.validate().is_err());
    assert!(LegacyConfig { llm_report_interval_ms: 5.0, ..Default::default() }.validate().is_err());
    assert_eq!(LegacyConfig::default().samples_for_ttt(10.0), 17);
    assert_eq!(LegacyConfig::default().samples_for_ttt(120.0), 2);
}

fn cfg_strategy() -> impl Strategy<Value = (f64, f64)> {
    (0.0..6.0f64, prop::sample::select(vec![0.0, 40.0, 80.0, 160.0, 320.0]))
}

proptest! {
    #[test]
    fn a3_is_monotone_in_offset_and_ttt(
        serving in prop::collection::vec(-90.0..-60.0f64, 40),
        neigh in prop::collection::vec(prop::collection::vec(-90.0..-50.0f64, 40), 1..5),
        (lo_off, lo_ttt) in cfg_strategy(),
        (d_off, d_ttt) in cfg_strategy(),
    ) {
        let lo = LegacyConfig { a3_offset_db: lo_off, time_to_trigger_ms: lo_ttt, ..Default::default() };
        let hi = LegacyConfig { a3_offset_db: lo_off + d_off, time_to_trigger_ms: lo_ttt + d_ttt, ..Default::default() };
        let n: Vec<_> = neigh.into_iter().enumerate().map(|(i, s)| (GlobalBeamId(i as u32 + 1), s)).collect();
        if legacy_decide(&serving, &n, 10.0, &hi).is_some() {
            prop_assert!(legacy_decide(&serving, &n, 10.0, &lo).is_some());
        }
    }
}

#[test]
fn assessment_verdicts() {
    let b = GlobalBeamId(4);
    let a = assess(b, b, -70.0, -72.5, 3.0, -110.0);
    assert_eq!(a.verdict, Outcome::Good);
    assert!((a.rsrp_delta_db + 2.5).abs() < 1e-12);
    assert_eq!(assess(b, b, -70.0, -73.0, 3.0, -110.0).verdict, Outcome::Good);
    assert_eq!(assess(b, b, -70.0, -73.5, 3.0, -110.0).verdict, Outcome::Bad);
    assert_eq!(assess(b, b, -90.0, -111.0, 30.0, -110.0).verdict, Outcome::Rlf);
}

fn history(val_acc: f64) -> TrainHistory {
    TrainHistory { train_loss: vec![1.0], train_acc: vec![0.5], val_loss: vec![1.0], val_acc: vec![val_acc] }
}

#[test]
fn gate_examples() {
    assert!(validation_gate(&history(0.92), 0.7));
    assert!(!validation_gate(&history(0.5), 0.7));
    assert!(validation_gate(&history(0.0), 0.0));
    assert!(!validation_gate(&TrainHistory::default(), 0.0));
}

#[test]
fn fallback_is_idempotent_and_recovers_on_time() {
    let mut link = LinkState::new(SERVING);
    link.pending = Some(PendingSwitch { target: GlobalBeamId(3), origin: Origin::Proactive, scope: Mode::Centralized.scope(0, 1) });
    assert!(link.fallback(10, 5));
    assert!(link.llm_paused && link.pending.is_none());
    assert!(!link.fallback(12, 10));
    assert_eq!(link.recovery_at, 15);
    for f in 10..15 {
        assert!(link.try_recover(f, 1, GlobalBeamId(6), true).is_none());
    }
    let ev = link.try_recover(15, 1, GlobalBeamId(6), true).unwrap();
    assert_eq!((ev.frame, ev.source, ev.target, ev.origin), (15, SERVING, GlobalBeamId(6), Origin::Fallback));
    assert!(!link.llm_paused);
    assert_eq!(link.serving, GlobalBeamId(6));
    assert!(link.try_recover(16, 1, GlobalBeamId(7), true).is_none());
}

#[test]
fn history_keeps_latest_frames() {
    let mut link = LinkState::new(SERVING);
    for v in 0..5 {
        link.record(&[v as f64], 3);
    }
    assert_eq!(link.history.iter().map(|s| s[0]).collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
}

#[test]
fn modes_and_scopes() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
    }
    assert!("central".parse::<Mode>().is_err());
    assert_eq!(Mode::DistributedNoCoords.scope(2, 7).to_string(), "bs2-ue7");
    assert_eq!(Mode::Centralized.scope(2, 7).to_string(), "bs2");
    assert!(!Mode::Centralized.feature_set().uses_crnti());
    assert!(!Mode::Centralized.feature_set().uses_coords());
    assert!(Mode::DistributedWithCoords.feature_set().uses_coords());
    assert!(!Mode::DistributedNoCoords.feature_set().uses_coords());
}

#[test]
fn engine_config_validation() {
    assert!(EngineConfig::default().validate().is_ok());
    let mut c = EngineConfig::default();
    c.learner.validation_threshold = 1.5;
    assert!(c.validate().is_err());
    let mut c = EngineConfig::default();
    c.learner.intra_recovery_frames = 0;
    assert!(c.validate().is_err());
}
