//! `metapop`: synthetic scenarios, POI clustering, contact networks,
//! calibration, forecasting and evaluation as separate batch stages.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metapop_core::mobility::NetworkMode;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::Recorder;
use crate::stages::Context;

#[derive(Parser)]
#[command(name = "metapop", version, about = "Mobility-driven SEIRD metapopulation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario into `<out>/data`.
    Synth(Common),
    /// Cluster POIs by visitation pattern.
    Cluster(Common),
    /// Build daily contact matrices.
    Networks(Staged),
    /// Fit epidemic parameters by maximum likelihood.
    Calibrate(Staged),
    /// Forecast past the calibration window.
    Forecast(Staged),
    /// Score forecasts against held-out reports.
    Evaluate(Staged),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Staged {
    #[command(flatten)]
    common: Common,
    /// Network mode; all three when omitted.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    None,
    Tract,
    Pattern,
}

impl From<Mode> for NetworkMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::None => NetworkMode::None,
            Mode::Tract => NetworkMode::Tract,
            Mode::Pattern => NetworkMode::Pattern,
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (name, common, mode) = match &cli.command {
        Command::Synth(c) => ("synth", c, None),
        Command::Cluster(c) => ("cluster", c, None),
        Command::Networks(s) => ("networks", &s.common, Some(s.mode)),
        Command::Calibrate(s) => ("calibrate", &s.common, Some(s.mode)),
        Command::Forecast(s) => ("forecast", &s.common, Some(s.mode)),
        Command::Evaluate(s) => ("evaluate", &s.common, Some(s.mode)),
    };
    let cfg = RunConfig::load(&common.config, common.seed)?;
    let ctx = Context {
        cfg,
        out: common.out.clone(),
    };
    let explicit = matches!(mode, Some(Some(_)));
    let modes: Vec<NetworkMode> = match mode.flatten() {
        Some(m) => vec![m.into()],
        None => NetworkMode::ALL.to_vec(),
    };
    let label = match mode.flatten() {
        Some(m) => format!("{name} {}", NetworkMode::from(m)),
        None => name.to_string(),
    };

    let mut rec = Recorder::new(&ctx.out);
    match &cli.command {
        Command::Synth(_) => stages::synth(&ctx, &mut rec)?,
        Command::Cluster(_) => stages::cluster(&ctx, &mut rec)?,
        Command::Networks(_) => stages::networks(&ctx, &modes, &mut rec)?,
        Command::Calibrate(_) => stages::calibrate(&ctx, &modes, &mut rec)?,
        Command::Forecast(_) => stages::forecast(&ctx, &modes, &mut rec)?,
        Command::Evaluate(_) => stages::evaluate(&ctx, &modes, explicit, &mut rec)?,
    }
    rec.finish(&label, &common.config, ctx.cfg.hash(), ctx.cfg.seed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(manifest) => {
            log::info!("manifest written to {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
