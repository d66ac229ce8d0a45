use std::path::PathBuf;
use std::process::ExitCode;

use beamho::config::{ExperimentConfig, Preset};
use beamho::handoff::Mode;
use beamho::runner::{export_dataset, report, run_with};
use beamho::{Error, Result};
use clap::Parser;

/// Simulates mobile users in an urban grid and compares proactive beam
/// handoff learners against the legacy A3 rule.
#[derive(Debug, Parser)]
#[command(name = "beamho", version)]
struct Args {
    /// TOML overrides applied on top of the preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Base configuration: `paper` (full scale) or `desk`.
    #[arg(long, default_value = "paper")]
    preset: String,

    #[arg(long)]
    seed: Option<u64>,

    /// Learner mode to run; repeat for several. Default: all three.
    #[arg(long = "mode", value_name = "MODE")]
    modes: Vec<String>,

    /// Lookback to sweep; repeat for several.
    #[arg(long = "lookback", value_name = "L")]
    lookbacks: Vec<usize>,

    /// Write the simulated measurement dataset to PATH.
    #[arg(long, value_name = "PATH")]
    export_dataset: Option<PathBuf>,

    /// Run every (mode, lookback) episode and write artifacts here.
    #[arg(long, value_name = "PATH")]
    output_dir: Option<PathBuf>,

    /// Regenerate the summary of an existing run directory.
    #[arg(long, value_name = "DIR")]
    report: Option<PathBuf>,
}

fn resolve(args: &Args) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::preset(args.preset.parse::<Preset>()?);
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path, &base)?,
        None => base,
    };
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
    }
    if !args.modes.is_empty() {
        cfg.scenario.modes = args.modes.iter().map(|m| m.parse::<Mode>()).collect::<Result<_>>()?;
    }
    if !args.lookbacks.is_empty() {
        cfg.scenario.lookbacks = args.lookbacks.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(args: Args) -> Result<()> {
    if let Some(dir) = &args.report {
        report(dir)?;
        print!("{}", std::fs::read_to_string(dir.join("summary.txt"))?);
        return Ok(());
    }
    if args.export_dataset.is_none() && args.output_dir.is_none() {
        return Err(Error::Config("nothing to do: pass --output-dir, --export-dataset or --report".into()));
    }
    let cfg = resolve(&args)?;
    if let Some(path) = &args.export_dataset {
        let rows = export_dataset(&cfg, path)?;
        eprintln!("wrote {rows} rows to {}", path.display());
    }
    if let Some(dir) = &args.output_dir {
        let outcome = run_with(&cfg, dir, |e| {
            let acc = e.accuracy().map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            eprintln!(
                "{:<24} k={:<2} accuracy {acc}  scopes {}/{} accepted  fallbacks {}",
                e.mode.name(),
                e.lookback,
                e.accepted_scopes,
                e.trained_scopes,
                e.fallbacks
            );
        })?;
        eprintln!("{} episodes written to {}", outcome.episodes.len(), dir.display());
        print!("{}", std::fs::read_to_string(dir.join("summary.txt"))?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("beamho: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
