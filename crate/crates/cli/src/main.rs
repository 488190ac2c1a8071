//! `excite`: excitation design studies from a TOML configuration.
//!
//! Exit codes: 0 success, 1 runtime or model error, 2 configuration error.

mod commands;
mod config;
mod output;
mod prepare;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::output::Artifacts;

#[derive(Parser)]
#[command(name = "excite", version, about = "Optimal excitation design via global sensitivity analysis")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum CliCommand {
    /// Sensitivity trajectories and impact scores for one input signal.
    Sensitivity,
    /// Optimal input signal.
    Optimize,
    /// Least-squares identification on synthetic data.
    Identify,
    /// Ranks a catalogue of signals by their impact scores.
    Rank,
    /// Builds the intrusive surrogate and writes it as a text container.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sensitivity,
    Optimize,
    Identify,
    Rank,
    Surrogate,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Sensitivity => Command::Sensitivity,
            CliCommand::Optimize => Command::Optimize,
            CliCommand::Identify => Command::Identify,
            CliCommand::Rank => Command::Rank,
            CliCommand::Surrogate => Command::Surrogate,
        }
    }
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let Some(path) = cli.config.as_ref() else {
        return config_error("--config is required");
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return config_error(format!("{}: {e}", path.display())),
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return config_error("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cmd = Command::from(cli.command);
    let prepared = match prepare::prepare(cfg, cli.seed, cmd) {
        Ok(p) => p,
        Err(e) => return config_error(e),
    };

    let result = match cmd {
        Command::Sensitivity => commands::cmd_sensitivity(&prepared),
        Command::Optimize => commands::cmd_optimize(&prepared),
        Command::Identify => commands::cmd_identify(&prepared),
        Command::Rank => commands::cmd_rank(&prepared),
        Command::Surrogate => commands::cmd_surrogate(&prepared),
    };
    let files = match result {
        Ok(f) => f,
        Err(excite::Error::Config(msg)) => return config_error(msg),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let artifacts = Artifacts::new(&cli.out, &text, prepared.seed);
    if let Err(e) = artifacts.write_all(&files) {
        eprintln!("error: writing to {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    for (name, _) in &files {
        log::info!("wrote {}", cli.out.join(name).display());
    }
    ExitCode::SUCCESS
}
