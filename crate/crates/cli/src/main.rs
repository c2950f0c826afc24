//! `cpmgz`: geometry maps, ZEFOZ search, decoherence curves, Monte Carlo
//! runs and fits from the command line.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 configuration error,
//! 3 numerical non-convergence (the data file is still written).

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::Artifact;
use config::{GlobalArgs, Resolved};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    NotConverged(String),
    Other(String),
}

impl From<cpmg_zefoz::Error> for CliError {
    fn from(e: cpmg_zefoz::Error) -> Self {
        use cpmg_zefoz::Error as E;
        match e {
            E::InvalidParameter { .. } | E::ZeroField | E::OutOfWindow { .. } | E::Parse { .. } | E::Dataset(_) | E::Toml(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cpmgz", version, about = "Tm:YAG ZEFOZ geometry and CPMG decoherence toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Splitting and Rabi maps over field orientation (CSV).
    Map(commands::MapArgs),
    /// Constrained splitting minimum at fixed phi (JSON).
    Zefoz(commands::ZefozArgs),
    /// Inhomogeneous width from field misalignment (JSON).
    Broadening(commands::BroadeningArgs),
    /// Decay exponent and coherence on an (n, tau) grid (CSV).
    Gamma(commands::GammaArgs),
    /// Asymptotic T2 against pulse interval (CSV).
    T2curve(commands::T2CurveArgs),
    /// Monte Carlo coherence over OU noise paths (CSV).
    Mc(commands::McArgs),
    /// Spin-echo or log-linear T2 fit of an echo dataset (JSON).
    Fit(commands::FitArgs),
    /// Hole-burning line positions (CSV).
    Positions(commands::PositionsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Map(_) => "map",
            Command::Zefoz(_) => "zefoz",
            Command::Broadening(_) => "broadening",
            Command::Gamma(_) => "gamma",
            Command::T2curve(_) => "t2curve",
            Command::Mc(_) => "mc",
            Command::Fit(_) => "fit",
            Command::Positions(_) => "positions",
        }
    }

    fn run(&self, r: &Resolved) -> Result<Artifact, CliError> {
        match self {
            Command::Map(a) => commands::map(r, a),
            Command::Zefoz(a) => commands::zefoz(r, a),
            Command::Broadening(a) => commands::broadening(r, a),
            Command::Gamma(a) => commands::gamma(r, a),
            Command::T2curve(a) => commands::t2curve(r, a),
            Command::Mc(a) => commands::mc(r, a),
            Command::Fit(a) => commands::fit(r, a),
            Command::Positions(a) => commands::positions(r, a),
        }
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

fn emit(cli: &Cli, resolved: &Resolved, art: &Artifact, elapsed: f64) -> Result<(), CliError> {
    let Some(out) = &cli.global.out else {
        std::io::stdout()
            .write_all(&art.body)
            .map_err(|e| CliError::Other(e.to_string()))?;
        return Ok(());
    };
    std::fs::write(out, &art.body).map_err(|e| io_err(out, e))?;

    let record = json!({
        "tool": "cpmgz",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "data_file": out.file_name().map(|f| f.to_string_lossy().into_owned()),
        "parameters": art.parameters,
        "resolved": resolved,
    });
    let cfg_path = sidecar(out, ".config.json");
    let mut text = serde_json::to_vec_pretty(&record).map_err(|e| CliError::Other(e.to_string()))?;
    text.push(b'\n');
    std::fs::write(&cfg_path, text).map_err(|e| io_err(&cfg_path, e))?;

    let finished = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let timing = json!({ "elapsed_s": elapsed, "finished_unix_s": finished });
    let timing_path = sidecar(out, ".timing.json");
    std::fs::write(&timing_path, format!("{timing}\n")).map_err(|e| io_err(&timing_path, e))?;
    log::info!("wrote {} ({} bytes)", out.display(), art.body.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let resolved = config::resolve(&cli.global)?;
    let start = Instant::now();
    let art = cli.command.run(&resolved)?;
    emit(cli, &resolved, &art, start.elapsed().as_secs_f64())?;
    match &art.not_converged {
        Some(msg) => Err(CliError::NotConverged(msg.clone())),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::NotConverged(msg)) => {
            eprintln!("not converged: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
