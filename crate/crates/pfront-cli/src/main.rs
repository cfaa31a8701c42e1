//! `pfront` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pfront::config::{parse_config_for, Stage};
use pfront::pipeline::run_pipeline;

#[derive(Parser)]
#[command(name = "pfront", version, about = "Pulsating fronts of periodic bistable reaction-diffusion equations")]
struct Cli {
    /// Configuration file.
    #[arg(long, global = true, default_value = "pfront.conf")]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Accepted for interface stability; stages run on one thread.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Reserved; no stage is stochastic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Describe the medium.
    Medium,
    /// Solve one front in `[front] direction`.
    Front,
    /// Solve fronts for the configured number of directions.
    Sweep,
    /// Speed derivatives along the sweep.
    Derivative,
    /// Cauchy-problem bubble experiments.
    Spread,
    /// Barrier certificates.
    Verify,
    /// Run the stages listed under `[run] stages`.
    All,
}

impl Command {
    fn stages(self) -> Option<&'static [Stage]> {
        match self {
            Command::Medium => Some(&[Stage::Medium]),
            Command::Front => Some(&[Stage::Front]),
            Command::Sweep => Some(&[Stage::Sweep]),
            Command::Derivative => Some(&[Stage::Derivative]),
            Command::Spread => Some(&[Stage::Spread]),
            Command::Verify => Some(&[Stage::Verify]),
            Command::All => None,
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    let text = std::fs::read_to_string(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    let cfg = parse_config_for(&text, cli.command.stages()).with_context(|| format!("invalid config {}", cli.config.display()))?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let quiet = cli.quiet;
    let mut log = |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    log(&format!("config hash {:016x}, threads {} (single-threaded), seed {}", cfg.hash, cli.threads, cli.seed));
    let outcome = run_pipeline(&cfg, &out, &mut log)?;
    print!("{}", outcome.summary());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
