use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use coupled_smc_cli::{execute, parse_config, write_outcome, Command};

#[derive(Parser)]
#[command(
    name = "coupled-smc",
    version,
    about = "Coupled particle filter and MLMC experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Experiment configuration (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "COUPLED_SMC_THREADS", default_value_t = 0)]
    threads: usize,

    /// Output CSV; overrides `output` in the config. Standard output if neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Replicate runs at one level and horizon.
    Run,
    /// Variance sweep over `sweep.levels` or `sweep.horizons`.
    Sweep,
    /// Multilevel estimate for `mlmc.epsilon`.
    Mlmc,
    /// Compare standardized errors with the exact asymptotic variance.
    CltCheck,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Run => Command::Run,
            Sub::Sweep => Command::Sweep,
            Sub::Mlmc => Command::Mlmc,
            Sub::CltCheck => Command::CltCheck,
        }
    }
}

/// `Ok(true)` when every experiment assertion held.
fn run(cli: &Cli) -> Result<bool> {
    let path = cli.config.as_deref().context("--config is required")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));

    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()?;

    let outcome = execute(cli.command.into(), &cfg, &text)?;
    for note in &outcome.notes {
        eprintln!("warning: {note}");
    }
    write_outcome(&outcome, cli.out.as_deref().or(cfg.output.as_deref()))?;
    for failure in &outcome.failures {
        eprintln!("assertion failed: {failure}");
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
