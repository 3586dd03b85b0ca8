//! `qrouter`: simulate, synthesize, calibrate and fit router-cell spectra.
//!
//! Settings resolve as configuration file < `QROUTER_*` environment
//! variables < command-line flags. Every run writes into
//! `<out>/runs/<run id>/` and finishes with a `run.json` record. Failures
//! print one JSON object on stderr and exit nonzero.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrouter_core::io::SpectrumFormat;
use serde::Serialize;

use commands::FitInput;
use config::Config;

#[derive(Debug, Serialize)]
pub struct CliError {
    kind: String,
    message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl From<qrouter_core::Error> for CliError {
    fn from(e: qrouter_core::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qrouter",
    version,
    about = "Four-port router cell: model, synthetic data, calibration and fits"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true, env = "QROUTER_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for synthetic data; overrides `run.seed`.
    #[arg(long, global = true, env = "QROUTER_SEED")]
    seed: Option<u64>,
    /// Directory that receives `runs/<id>/`.
    #[arg(long, global = true, env = "QROUTER_OUT", default_value = ".")]
    out: PathBuf,
    /// Spectrum output format: csv or s4p; overrides `run.format`.
    #[arg(long, global = true, env = "QROUTER_FORMAT", value_parser = parse_format)]
    format: Option<SpectrumFormat>,
}

fn parse_format(s: &str) -> Result<SpectrumFormat, String> {
    s.parse().map_err(|e: qrouter_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the cell model on the configured grid.
    Simulate,
    /// Generate a synthetic measured/high-drive pair with ground truth.
    Synth,
    /// Calibrate raw traces against a high-drive reference.
    Calibrate {
        #[arg(long)]
        meas: PathBuf,
        #[arg(long)]
        hd: PathBuf,
    },
    /// Four-channel fit of calibrated data, or of raw data plus reference.
    Fit {
        #[arg(long, conflicts_with_all = ["meas", "hd"], required_unless_present_all = ["meas", "hd"])]
        calibrated: Option<PathBuf>,
        #[arg(long, requires = "hd")]
        meas: Option<PathBuf>,
        #[arg(long, requires = "meas")]
        hd: Option<PathBuf>,
    },
    /// Synthetic flux-bias sweep, efficiency grid and flux-noise fit.
    SweepBias,
    /// Synthetic temperature sweep and thermal fit.
    SweepTemp,
    /// Synthetic drive-power sweep and saturation fits.
    SweepPower,
    /// Dressed-state line positions versus photon number.
    Dressed,
    /// Summarize a finished run.
    Report {
        /// Run directory to summarize.
        #[arg(long)]
        run: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Synth => "synth",
            Command::Calibrate { .. } => "calibrate",
            Command::Fit { .. } => "fit",
            Command::SweepBias => "sweep-bias",
            Command::SweepTemp => "sweep-temp",
            Command::SweepPower => "sweep-power",
            Command::Dressed => "dressed",
            Command::Report { .. } => "report",
        }
    }
}

fn resolve_config(g: &Global) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = g.seed {
        cfg.run.seed = seed;
    }
    if let Some(format) = g.format {
        cfg.run.format = format;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    let out = cli.global.out.as_path();
    let name = cli.command.name();
    let is_report = matches!(cli.command, Command::Report { .. });
    let run = match cli.command {
        Command::Simulate => commands::simulate(&cfg, out)?,
        Command::Synth => commands::synth(&cfg, out)?,
        Command::Calibrate { meas, hd } => commands::calibrate(&cfg, out, &meas, &hd)?,
        Command::Fit { calibrated, meas, hd } => {
            let input = match (calibrated, meas, hd) {
                (Some(c), _, _) => FitInput::Calibrated(c),
                (None, Some(meas), Some(hd)) => FitInput::Raw { meas, hd },
                _ => return Err(CliError::new("usage", "fit needs --calibrated or both --meas and --hd")),
            };
            commands::fit(&cfg, out, &input)?
        }
        Command::SweepBias => commands::sweep_bias(&cfg, out)?,
        Command::SweepTemp => commands::sweep_temp(&cfg, out)?,
        Command::SweepPower => commands::sweep_power(&cfg, out)?,
        Command::Dressed => commands::dressed(&cfg, out)?,
        Command::Report { run } => {
            let (r, text) = commands::report(&cfg, out, &run)?;
            print!("{text}");
            r
        }
    };
    let dir = run.dir.clone();
    let record = run.finish()?;
    log::info!("{name}: {} outputs in {}", record.outputs.len(), dir.display());
    if !is_report {
        println!("{}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let json = serde_json::json!({ "error": e });
            eprintln!("{json}");
            ExitCode::FAILURE
        }
    }
}
