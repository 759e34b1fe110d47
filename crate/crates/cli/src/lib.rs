//! Config-driven pipeline behind the `pmvol` binary.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use artifacts::Artifacts;
use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pmvol", version, about = "Prediction-market signals for realized-volatility forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Load and validate quotes, prices and controls.
    Ingest(Common),
    /// Build signals, targets and the aligned panel.
    Signals(Common),
    /// Estimate the model ladder, horizon profile and effect sizes.
    Estimate(Common),
    /// Signal × asset grid with Benjamini–Hochberg control.
    Grid(Common),
    /// Expanding-window forecast comparison and position weights.
    Oos(Common),
    /// Robustness battery for the primary signal.
    Robustness(Common),
    /// Write synthetic market data and an oracle panel.
    Simulate(Common),
    /// Summarize an artifact directory.
    Report(Common),
    /// Every stage followed by the report.
    Run(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Ingest(c)
            | Command::Signals(c)
            | Command::Estimate(c)
            | Command::Grid(c)
            | Command::Oos(c)
            | Command::Robustness(c)
            | Command::Simulate(c)
            | Command::Report(c)
            | Command::Run(c) => c,
        }
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&RunConfig>) -> CliResult<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.as_ref().map(|o| c.resolve(o))))
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
}

fn write_report(dir: &Path) -> CliResult<String> {
    let md = report::render(dir)?;
    let path = dir.join(report::REPORT);
    std::fs::write(&path, &md).map_err(|e| CliError::io(&path, e))?;
    Ok(md)
}

/// Runs one subcommand and returns the artifact directory.
pub fn execute(command: &Command) -> CliResult<PathBuf> {
    let common = command.common();
    if let Command::Report(_) = command {
        let cfg = common.config.as_ref().map(|_| load_config(common)).transpose()?;
        let dir = out_dir(common, cfg.as_ref())?;
        write_report(&dir)?;
        Artifacts::new(&dir)?.write_manifest()?;
        return Ok(dir);
    }

    let cfg = load_config(common)?;
    let art = Artifacts::new(out_dir(common, Some(&cfg))?)?;
    if let Command::Simulate(_) = command {
        pipeline::stage_simulate(&cfg, &art)?;
        art.write_manifest()?;
        return Ok(art.root().to_path_buf());
    }

    // Every analysis stage rebuilds its inputs in memory and writes only its
    // own artifacts.
    let loaded = if matches!(command, Command::Ingest(_) | Command::Run(_)) {
        pipeline::stage_ingest(&cfg, &art)?
    } else {
        pipeline::load_inputs(&cfg)?
    };
    if matches!(command, Command::Ingest(_)) {
        art.write_manifest()?;
        return Ok(art.root().to_path_buf());
    }
    let panel = if matches!(command, Command::Signals(_) | Command::Run(_)) {
        pipeline::stage_signals(&cfg, &loaded, &art)?
    } else {
        pipeline::build_panel(&cfg, &loaded.inputs)?
    };
    let all = matches!(command, Command::Run(_));
    if all || matches!(command, Command::Estimate(_)) {
        pipeline::stage_estimate(&cfg, &panel, &art)?;
    }
    if all || matches!(command, Command::Grid(_)) {
        pipeline::stage_grid(&cfg, &panel, &art)?;
    }
    if all || matches!(command, Command::Oos(_)) {
        pipeline::stage_oos(&cfg, &panel, &art)?;
    }
    if all || matches!(command, Command::Robustness(_)) {
        pipeline::stage_robustness(&cfg, &panel, &art)?;
    }
    art.write_manifest()?;
    if all {
        write_report(art.root())?;
        art.write_manifest()?;
    }
    Ok(art.root().to_path_buf())
}
