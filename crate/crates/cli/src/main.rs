//! `phdyn`: run the measurement battery from a flat configuration file.
//!
//! Exit status is 0 when the check passes, 1 when it fails and 2 when the
//! configuration is unusable.

mod commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::{parse_mode, ExperimentConfig};

#[derive(Parser)]
#[command(name = "phdyn", version, about = "Experiments on partially hyperbolic torus maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the `output` key.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `strict` or `relaxed`, overriding the `mode` key.
    #[arg(long, global = true)]
    mode: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Certify the parameter set and resolve `auto` values.
    Gate,
    /// Lyapunov spectra of an ensemble of random starts.
    Lyapunov,
    /// Omega-limit labels and clustering of Birkhoff averages.
    Basin,
    /// Cone invariance and diagonal domination.
    Cone,
    /// Trapping slab or filtration.
    Trap,
    /// Structure of the DA map.
    Da,
    /// Collate earlier outputs into report.md.
    Report,
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = &cli.mode {
        cfg.mode = parse_mode(m)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Gate => commands::gate(&cfg),
        Command::Lyapunov => commands::lyapunov(&cfg),
        Command::Basin => commands::basin(&cfg),
        Command::Cone => commands::cone(&cfg),
        Command::Trap => commands::trap(&cfg),
        Command::Da => commands::da(&cfg),
        Command::Report => report::report(&cfg.output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => {
            println!("PASS");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Fail(why)) => {
            println!("FAIL: {why}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
