//! Experiment harness around `dislo-core`: TOML configuration, subcommands and
//! deterministic CSV output.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;
use std::time::Instant;

use config::RunConfig;
use output::{git_blob_hash, ResultRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(#[from] dislo_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Cell,
    Phi,
    Simulate,
    Sweep,
    Korn,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Phi => "phi",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Korn => "korn",
        }
    }
}

/// Runs `command` on the raw config text and writes payloads plus a
/// manifest into `out`. Returns the payload file names.
pub fn run(command: Command, config_text: &str, out: &Path, seed: Option<u64>, check_burgers: bool) -> Result<Vec<String>, CliError> {
    let start = Instant::now();
    let mut cfg = RunConfig::parse(config_text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let products = match command {
        Command::Cell => commands::cmd_cell(&cfg)?,
        Command::Phi => commands::cmd_phi(&cfg, check_burgers)?,
        Command::Simulate => commands::cmd_simulate(&cfg)?,
        Command::Sweep => commands::cmd_sweep(&cfg)?,
        Command::Korn => commands::cmd_korn(&cfg)?,
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let hash = cfg.hash();
    let mut payloads = Vec::new();
    for t in &products.tables {
        t.write(out, &hash)?;
        payloads.push(format!("{}.csv", t.name));
    }
    for (name, body) in &products.files {
        std::fs::write(out.join(name), body).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        payloads.push(name.clone());
    }
    ResultRecord {
        command: command.name().into(),
        config_sha256: hash,
        input_blob: git_blob_hash(config_text.as_bytes()),
        seed: cfg.seed,
        payloads: payloads.clone(),
        seconds: start.elapsed().as_secs_f64(),
    }
    .write(out)?;
    Ok(payloads)
}
