use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand, ValueEnum};

use plle::expcli::{self, CliError, CounterexampleKind, CounterexampleSpec, ScenarioConfig, Subcommand};

#[derive(Parser)]
#[command(name = "plle", version, about = "Pseudo log-likelihood experiments with tail-extended links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Continuous,
    Binary,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Tabulate the tail-extended link and its knots.
    CorrectLink(Common),
    /// Fit a dataset file.
    Mle(Common),
    /// Reproduce a divergence counterexample and check its fix.
    Counterexample {
        #[command(flatten)]
        common: Common,
        /// Scenario (overrides `[counterexample] which`).
        #[arg(long, value_enum)]
        which: Option<Which>,
    },
    /// Simulate UCB-GLM with corrected and uncorrected fitting.
    Bandit(Common),
}

fn load(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => expcli::parse_config(p)?,
        None => ScenarioConfig::empty(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<expcli::RunManifest, CliError> {
    let (cmd, common, which) = match &cli.command {
        Command::CorrectLink(c) => (Subcommand::CorrectLink, c, None),
        Command::Mle(c) => (Subcommand::Mle, c, None),
        Command::Counterexample { common, which } => (Subcommand::Counterexample, common, *which),
        Command::Bandit(c) => (Subcommand::Bandit, c, None),
    };
    let mut cfg = load(common)?;
    if let Some(w) = which {
        let kind = match w {
            Which::Continuous => CounterexampleKind::Continuous,
            Which::Binary => CounterexampleKind::Binary,
        };
        if cfg.counterexample.as_ref().map(|s| s.which) != Some(kind) {
            cfg.counterexample = Some(CounterexampleSpec::new(kind));
        }
    }
    let out = cfg.output_dir.clone();
    expcli::execute(cmd, &cfg, &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(m) => {
            for f in &m.outputs {
                println!("wrote {f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
