//! Experiment orchestration: one episode per (mode, lookback) over a shared
//! simulated world, written out as a reproducible artifact tree.
//!
//! Layout of an output directory:
//!
//! ```text
//! config.toml                 resolved configuration
//! manifest.txt                code version, seed and file list
//! episodes.csv                per-episode counters
//! accuracy.csv                per-scope accuracy
//! fig4_history.csv            mean training curves per episode
//! fig6_accuracy.csv           pooled accuracy per episode
//! fig7_coherence_cdf.csv      beam coherence time CDF
//! fig8_spread.csv             min/mean/max scope accuracy
//! zero_one.csv, summary.txt   written by `report`
//! events/ pairs/ columns/ histories/ retrains/   one file per episode
//! ```
//!
//! `INCOMPLETE` exists while a run is in progress and keeps the error of a
//! failed run.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::dataset::write_rows;
use crate::error::{Error, Result};
use crate::handoff::{run_episode, EpisodeResult, Mode, Origin, PredictorKind, EVENT_COLUMNS};
use crate::learner::TrainHistory;
use crate::metrics::{aggregate_by_lookback, coherence_cdf, pooled_report, scope_reports, zero_one, AccuracyReport, Cdf};
use crate::world::World;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const BASELINE_MODE: Mode = Mode::DistributedNoCoords;
pub const ZERO_ONE_EPSILON: f64 = 0.03;
const MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone)]
pub struct EpisodeSummary {
    pub mode: Mode,
    pub lookback: usize,
    /// `None` when no scope produced predictions.
    pub pooled: Option<AccuracyReport>,
    pub scopes: Vec<AccuracyReport>,
    pub trained_scopes: usize,
    pub skipped_scopes: usize,
    pub accepted_scopes: usize,
    pub acted_pairs: usize,
    pub events: usize,
    pub proactive_events: usize,
    pub fallbacks: usize,
    pub rlf_detections: usize,
    pub interruption_frames: usize,
    pub retrains: usize,
    pub max_softmax_deviation: f64,
}

impl EpisodeSummary {
    fn new(ep: &EpisodeResult) -> Result<Self> {
        let pool = ep.pool.as_ref();
        Ok(Self {
            mode: ep.mode,
            lookback: ep.lookback,
            pooled: if ep.pairs.is_empty() { None } else { Some(pooled_report(ep.mode, ep.lookback, &ep.pairs)?) },
            scopes: scope_reports(ep.mode, ep.lookback, &ep.pairs)?,
            trained_scopes: pool.map_or(0, |p| p.learners.len()),
            skipped_scopes: pool.map_or(0, |p| p.skipped.len()),
            accepted_scopes: pool.map_or(0, |p| p.learners.values().filter(|l| l.accepted).count()),
            acted_pairs: ep.pairs.iter().filter(|p| p.acted).count(),
            events: ep.events.len(),
            proactive_events: ep.events.iter().filter(|e| e.origin == Origin::Proactive).count(),
            fallbacks: ep.fallbacks,
            rlf_detections: ep.rlf_detections,
            interruption_frames: ep.interruption_frames,
            retrains: ep.retrains.len(),
            max_softmax_deviation: ep.max_softmax_deviation,
        })
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.pooled.as_ref().map(|r| r.accuracy)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub episodes: Vec<EpisodeSummary>,
    pub coherence: Cdf,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn episode(&self, mode: Mode, lookback: usize) -> Option<&EpisodeSummary> {
        self.episodes.iter().find(|e| e.mode == mode && e.lookback == lookback)
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<World> {
    let s = &cfg.scenario;
    World::simulate(
        cfg.grid,
        cfg.mobility,
        cfg.radio.clone(),
        s.num_ues,
        s.frames,
        s.frame_duration_ms / 1e3,
        s.seed,
    )
}

/// Simulates the scenario and writes its measurement rows; returns the row count.
pub fn export_dataset(cfg: &ExperimentConfig, path: &Path) -> Result<usize> {
    cfg.validate()?;
    let rows = simulate(cfg)?.all_rows();
    write_rows(&rows, File::create(path)?)?;
    Ok(rows.len())
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    run_with(cfg, out_dir, |_| {})
}

/// Like [`run`], calling `on_episode` after every finished episode.
pub fn run_with(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    mut on_episode: impl FnMut(&EpisodeSummary),
) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let marker = out_dir.join(MARKER);
    fs::write(&marker, "run in progress\n")?;
    match execute(cfg, out_dir, &mut on_episode) {
        Ok(outcome) => {
            fs::remove_file(&marker)?;
            Ok(outcome)
        }
        Err(e) => {
            // The original error matters more than a failed marker write.
            let _ = fs::write(&marker, format!("run failed: {e}\n"));
            Err(e)
        }
    }
}

fn csv_file(path: PathBuf) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn execute(cfg: &ExperimentConfig, out: &Path, on_episode: &mut dyn FnMut(&EpisodeSummary)) -> Result<RunOutcome> {
    let echo = format!("# Resolved configuration. Re-run with: beamho --config config.toml --output-dir <dir>\n\n{}", cfg.to_toml()?);
    fs::write(out.join("config.toml"), echo)?;
    let world = simulate(cfg)?;
    let engine = cfg.engine();

    let coherence = coherence_cdf(&world.coherence_samples()?)?;
    let mut w = csv_file(out.join("fig7_coherence_cdf.csv"))?;
    w.write_record(["coherence_s", "cdf"])?;
    for (v, p) in coherence.table() {
        w.write_record([v.to_string(), p.to_string()])?;
    }
    w.flush()?;

    let mut episodes = Vec::new();
    let mut curves = csv_file(out.join("fig4_history.csv"))?;
    curves.write_record(["mode", "lookback", "epoch", "scopes", "train_loss", "train_acc", "val_loss", "val_acc"])?;
    for &mode in &cfg.scenario.modes {
        for &k in &cfg.scenario.lookbacks {
            let ep = run_episode(&world, mode, k, PredictorKind::Learned, &engine, &cfg.training)?;
            write_episode(out, &ep)?;
            let histories: Vec<&TrainHistory> =
                ep.pool.iter().flat_map(|p| p.learners.values().map(|l| &l.history)).collect();
            for (epoch, row) in mean_curves(&histories).into_iter().enumerate() {
                let mut rec = vec![mode.to_string(), k.to_string(), (epoch + 1).to_string(), row.0.to_string()];
                rec.extend(row.1.iter().map(f64::to_string));
                curves.write_record(rec)?;
            }
            let summary = EpisodeSummary::new(&ep)?;
            on_episode(&summary);
            episodes.push(summary);
        }
    }
    curves.flush()?;

    write_tables(out, &episodes)?;
    let summary = report(out)?;
    write_manifest(cfg, out)?;
    Ok(RunOutcome { episodes, coherence, summary })
}

/// Per-epoch means over every history that reached that epoch, with the
/// number of contributing scopes.
fn mean_curves(histories: &[&TrainHistory]) -> Vec<(usize, [f64; 4])> {
    let epochs = histories.iter().map(|h| h.len()).max().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let live: Vec<_> = histories.iter().filter(|h| h.len() > e).collect();
            let n = live.len() as f64;
            let mean = |f: fn(&TrainHistory) -> &Vec<f64>| live.iter().map(|h| f(h)[e]).sum::<f64>() / n;
            (live.len(), [mean(|h| &h.train_loss), mean(|h| &h.train_acc), mean(|h| &h.val_loss), mean(|h| &h.val_acc)])
        })
        .collect()
}

fn write_episode(out: &Path, ep: &EpisodeResult) -> Result<()> {
    let stem = format!("{}_k{}", ep.mode, ep.lookback);

    let mut w = csv_file(out.join("events").join(format!("{stem}.csv")))?;
    w.write_record(EVENT_COLUMNS)?;
    for e in &ep.events {
        w.write_record([
            e.frame.to_string(),
            e.crnti.to_string(),
            e.source.0.to_string(),
            e.target.0.to_string(),
            e.origin.name().to_string(),
            u8::from(e.intra_bs).to_string(),
            e.outcome.name().to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_file(out.join("pairs").join(format!("{stem}.csv")))?;
    w.write_record(["frame", "input_frame", "crnti", "scope", "truth", "predicted", "acted"])?;
    for p in &ep.pairs {
        w.write_record([
            p.frame.to_string(),
            p.input_frame.to_string(),
            p.crnti.to_string(),
            p.scope.to_string(),
            p.truth.0.to_string(),
            p.predicted.0.to_string(),
            u8::from(p.acted).to_string(),
        ])?;
    }
    w.flush()?;

    let Some(pool) = &ep.pool else { return Ok(()) };
    let columns = out.join("columns");
    fs::create_dir_all(&columns)?;
    let catalog: Vec<String> = pool.column_catalog().into_iter().collect();
    fs::write(columns.join(format!("{stem}.txt")), catalog.join("\n") + "\n")?;

    let mut w = csv_file(out.join("histories").join(format!("{stem}.csv")))?;
    w.write_record(["scope", "epoch", "train_loss", "train_acc", "val_loss", "val_acc", "accepted"])?;
    for (key, l) in &pool.learners {
        let h = &l.history;
        for e in 0..h.len() {
            w.write_record([
                key.to_string(),
                (e + 1).to_string(),
                h.train_loss[e].to_string(),
                h.train_acc[e].to_string(),
                h.val_loss[e].to_string(),
                h.val_acc[e].to_string(),
                u8::from(l.accepted).to_string(),
            ])?;
        }
    }
    for (key, reason) in &pool.skipped {
        w.write_record([key.to_string(), "0".into(), String::new(), String::new(), String::new(), String::new(), format!("skipped: {reason}")])?;
    }
    w.flush()?;

    let mut w = csv_file(out.join("retrains").join(format!("{stem}.csv")))?;
    w.write_record(["frame", "scope", "from_scratch", "epochs", "final_val_acc", "accepted"])?;
    for r in &ep.retrains {
        w.write_record([
            r.frame.to_string(),
            r.scope.to_string(),
            u8::from(r.from_scratch).to_string(),
            r.history.len().to_string(),
            opt(r.history.val_acc.last().copied()),
            u8::from(r.accepted).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const ACCURACY_COLUMNS: [&str; 5] = ["mode", "lookback", "accuracy", "samples", "rlf_rate"];

fn write_tables(out: &Path, episodes: &[EpisodeSummary]) -> Result<()> {
    let mut w = csv_file(out.join("fig6_accuracy.csv"))?;
    w.write_record(ACCURACY_COLUMNS)?;
    for e in episodes {
        let p = e.pooled.as_ref();
        w.write_record([
            e.mode.to_string(),
            e.lookback.to_string(),
            opt(p.map(|r| r.accuracy)),
            p.map_or(0, |r| r.samples).to_string(),
            opt(p.map(|r| r.rlf_rate)),
        ])?;
    }
    w.flush()?;

    let mut w = csv_file(out.join("accuracy.csv"))?;
    w.write_record(["mode", "lookback", "scope", "accuracy", "samples", "rlf_rate"])?;
    for r in episodes.iter().flat_map(|e| &e.scopes) {
        w.write_record([
            r.mode.to_string(),
            r.lookback.to_string(),
            r.scope.map(|s| s.to_string()).unwrap_or_default(),
            r.accuracy.to_string(),
            r.samples.to_string(),
            r.rlf_rate.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_file(out.join("fig8_spread.csv"))?;
    w.write_record(["mode", "lookback", "scopes", "min", "mean", "max"])?;
    for e in episodes.iter().filter(|e| !e.scopes.is_empty()) {
        for (k, s) in aggregate_by_lookback(&e.scopes)? {
            w.write_record([
                e.mode.to_string(),
                k.to_string(),
                e.scopes.len().to_string(),
                s.min.to_string(),
                s.mean.to_string(),
                s.max.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv_file(out.join("episodes.csv"))?;
    w.write_record([
        "mode",
        "lookback",
        "trained_scopes",
        "skipped_scopes",
        "accepted_scopes",
        "pairs",
        "acted_pairs",
        "events",
        "proactive_events",
        "fallbacks",
        "rlf_detections",
        "interruption_frames",
        "retrains",
        "max_softmax_deviation",
    ])?;
    for e in episodes {
        w.write_record([
            e.mode.to_string(),
            e.lookback.to_string(),
            e.trained_scopes.to_string(),
            e.skipped_scopes.to_string(),
            e.accepted_scopes.to_string(),
            e.pooled.as_ref().map_or(0, |r| r.samples).to_string(),
            e.acted_pairs.to_string(),
            e.events.to_string(),
            e.proactive_events.to_string(),
            e.fallbacks.to_string(),
            e.rlf_detections.to_string(),
            e.interruption_frames.to_string(),
            e.retrains.to_string(),
            e.max_softmax_deviation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<(String, u64)>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("listed under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if rel != "manifest.txt" && rel != MARKER {
                out.push((rel, e.metadata()?.len()));
            }
        }
    }
    Ok(())
}

fn write_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut files = Vec::new();
    list_files(out, out, &mut files)?;
    let mut text = format!(
        "code_version = {CODE_VERSION}\nseed = {}\nconfig = config.toml\nrerun = beamho --config config.toml --output-dir <dir>\n\n[files]\n",
        cfg.scenario.seed
    );
    for (name, bytes) in files {
        text.push_str(&format!("{name} {bytes}\n"));
    }
    fs::write(out.join("manifest.txt"), text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: Mode,
    /// Lookback with the highest accuracy, the smallest on ties.
    pub best_lookback: usize,
    pub best_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_rlf_rate: f64,
    /// Zero-one entries against the baseline over shared lookbacks.
    pub zero_one: Option<Vec<(usize, u8)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub modes: Vec<ModeSummary>,
}

/// Reads `fig6_accuracy.csv` from a run directory, writes `zero_one.csv`
/// and `summary.txt` next to it, and returns the summary.
pub fn report(dir: &Path) -> Result<Summary> {
    let table = dir.join("fig6_accuracy.csv");
    if !table.is_file() {
        return Err(Error::InvalidInput(format!("{} holds no run artifacts (missing fig6_accuracy.csv)", dir.display())));
    }
    let mut rd = csv::Reader::from_path(&table)?;
    if rd.headers()?.iter().ne(ACCURACY_COLUMNS) {
        return Err(Error::Parse(format!("{}: unexpected header", table.display())));
    }
    let mut by_mode: BTreeMap<Mode, Vec<(usize, f64, f64)>> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let bad = || Error::Parse(format!("{}: malformed row {:?}", table.display(), rec));
        let mode: Mode = rec[0].parse().map_err(|_| bad())?;
        let k: usize = rec[1].parse().map_err(|_| bad())?;
        if !order.contains(&mode) {
            order.push(mode);
        }
        if rec[2].is_empty() {
            continue;
        }
        let acc: f64 = rec[2].parse().map_err(|_| bad())?;
        let rlf: f64 = rec[4].parse().map_err(|_| bad())?;
        by_mode.entry(mode).or_default().push((k, acc, rlf));
    }
    let baseline = by_mode.get(&BASELINE_MODE).cloned();

    let mut zo = csv_file(dir.join("zero_one.csv"))?;
    zo.write_record(["mode", "lookback", "accuracy", "baseline_accuracy", "win"])?;
    let mut modes = Vec::new();
    let mut silent = Vec::new();
    for mode in order {
        let Some(rows) = by_mode.get(&mode) else {
            silent.push(mode);
            continue;
        };
        let mut best = rows[0];
        for &r in &rows[1..] {
            if r.1 > best.1 || (r.1 == best.1 && r.0 < best.0) {
                best = r;
            }
        }
        let n = rows.len() as f64;
        let zero_one_entries = match &baseline {
            Some(base) if mode != BASELINE_MODE => {
                let shared: Vec<_> = rows
                    .iter()
                    .filter_map(|&(k, a, _)| base.iter().find(|b| b.0 == k).map(|b| (k, a, b.1)))
                    .collect();
                let s: Vec<f64> = shared.iter().map(|x| x.1).collect();
                let b: Vec<f64> = shared.iter().map(|x| x.2).collect();
                let v = zero_one(&s, &b, ZERO_ONE_EPSILON)?;
                for (x, win) in shared.iter().zip(&v.entries) {
                    zo.write_record([mode.to_string(), x.0.to_string(), x.1.to_string(), x.2.to_string(), win.to_string()])?;
                }
                Some(shared.iter().map(|x| x.0).zip(v.entries).collect())
            }
            _ => None,
        };
        modes.push(ModeSummary {
            mode,
            best_lookback: best.0,
            best_accuracy: best.1,
            mean_accuracy: rows.iter().map(|r| r.1).sum::<f64>() / n,
            mean_rlf_rate: rows.iter().map(|r| r.2).sum::<f64>() / n,
            zero_one: zero_one_entries,
        });
    }
    zo.flush()?;

    let mut text = format!("baseline for zero-one scores: {BASELINE_MODE}, epsilon {ZERO_ONE_EPSILON}\n\n");
    for m in &modes {
        text.push_str(&format!(
            "{}\n  best lookback   {} (accuracy {:.4})\n  mean accuracy   {:.4}\n  mean RLF rate   {:.4}\n",
            m.mode, m.best_lookback, m.best_accuracy, m.mean_accuracy, m.mean_rlf_rate
        ));
        if let Some(z) = &m.zero_one {
            let bits: Vec<String> = z.iter().map(|(k, w)| format!("{k}:{w}")).collect();
            text.push_str(&format!("  zero-one        {}\n", bits.join(" ")));
        }
    }
    for m in silent {
        text.push_str(&format!("{m}\n  no predictions\n"));
    }
    fs::write(dir.join("summary.txt"), text)?;
    Ok(Summary { modes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_rejects_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let err = report(dir.path()).unwrap_err();
        assert!(err.to_string().contains("fig6_accuracy.csv"));
        assert!(!err.is_config());
    }

    #[test]
    fn report_picks_argmax_and_scores_against_baseline() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("fig6_accuracy.csv"),
            "mode,lookback,accuracy,samples,rlf_rate\n\
             distributed_no_coords,0,0.5,10,0.5\n\
             distributed_no_coords,2,0.8,10,0.19999999999999996\n\
             centralized,0,0.6,10,0.4\n\
             centralized,2,0.6,10,0.4\n\
             centralized,4,,0,\n",
        )
        .unwrap();
        let s = report(dir.path()).unwrap();
        assert_eq!(s.modes.len(), 2);
        let base = &s.modes[0];
        assert_eq!((base.mode, base.best_lookback, base.zero_one.clone()), (BASELINE_MODE, 2, None));
        let c = &s.modes[1];
        assert_eq!(c.best_lookback, 0);
        assert_eq!(c.zero_one, Some(vec![(0, 1), (2, 0)]));
        assert!((c.mean_accuracy - 0.6).abs() < 1e-15);
        let zo = fs::read_to_string(dir.path().join("zero_one.csv")).unwrap();
        assert_eq!(zo.lines().count(), 3);
        assert!(dir.path().join("summary.txt").is_file());
    }

    #[test]
    fn mean_curves_average_ragged_histories() {
        let a = TrainHistory { train_loss: vec![2.0, 1.0], train_acc: vec![0.0, 0.5], val_loss: vec![2.0, 1.0], val_acc: vec![0.0, 1.0] };
        let b = TrainHistory { train_loss: vec![4.0], train_acc: vec![1.0], val_loss: vec![0.0], val_acc: vec![0.5] };
        let c = mean_curves(&[&a, &b]);
        assert_eq!(c, vec![(2, [3.0, 0.5, 1.0, 0.25]), (1, [1.0, 0.5, 1.0, 1.0])]);
    }
}
