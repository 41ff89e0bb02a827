use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dislo_cli::{run, CliError, Command};

#[derive(Parser)]
#[command(name = "dislo", version, about = "Dislocation energy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: configuration value, else all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also check the Burgers condition on the ψ table (phi only)
    #[arg(long, global = true)]
    check_burgers: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Annulus cell problems and the extrapolated self-energy density
    Cell,
    /// ψ table, relaxed density φ and decomposition certificates
    Phi,
    /// Minimal energy of one dislocation configuration
    Simulate,
    /// Scaling sweep over ε and the gap to the limit functional
    Sweep,
    /// Empirical Korn constants
    Korn,
}

fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => dislo_cli::config::RunConfig::parse(&text)?.threads,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let command = match cli.command {
        Cmd::Cell => Command::Cell,
        Cmd::Phi => Command::Phi,
        Cmd::Simulate => Command::Simulate,
        Cmd::Sweep => Command::Sweep,
        Cmd::Korn => Command::Korn,
    };
    run(command, &text, &cli.out, cli.seed, cli.check_burgers)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", cli.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dislo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
