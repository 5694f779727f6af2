//! `amcs` — generate step-level supervision data with adaptive Monte Carlo
//! search, inspect node estimates, benchmark the estimator, and train a
//! desk-scale scorer on the output.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amcs_core::config::{RunConfig, SourceKind};
use amcs_core::Error;

#[derive(Parser)]
#[command(name = "amcs", version, about = "Adaptive Monte Carlo supervision data toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured rollout source.
    #[arg(long, global = true, value_parser = ["sim", "remote"])]
    source: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the search over a problems file and export supervision records.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Problems JSONL with fields `id`, `problem`, `answer`.
        #[arg(long)]
        problems: PathBuf,
    },
    /// Estimate a single node and print the estimate as JSON.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problems: PathBuf,
        /// Problem to estimate; the first problem when omitted.
        #[arg(long)]
        problem_id: Option<String>,
        /// Prefix step, repeatable in order; empty for the root.
        #[arg(long = "step")]
        steps: Vec<String>,
    },
    /// Compare adaptive and fixed-budget estimation on a synthetic forest.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// Print dataset statistics and write the allocation report.
    Stats {
        #[command(flatten)]
        common: Common,
        /// Supervision records JSONL.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the soft-label scorer on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Load config and fold in the shared flag overrides.
fn resolve_config(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &common.out {
        config.run.out_dir = out.display().to_string();
    }
    match common.source.as_deref() {
        Some("sim") => config.run.source = SourceKind::Sim,
        Some("remote") => config.run.source = SourceKind::Remote,
        _ => {}
    }
    Ok(config)
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidConfig { .. } => 2,
        Error::Io(_)
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::InvalidProblem(_)
        | Error::EmptyDataset
        | Error::EmptySample(_) => 3,
        Error::Transport(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Generate { common, .. }
        | Command::Estimate { common, .. }
        | Command::Benchmark { common }
        | Command::Stats { common, .. }
        | Command::Train { common, .. } => common.clone(),
    };

    let config = match resolve_config(&common) {
        Ok(config) => config,
        Err(error) => {
            eprintln!("error: {error}");
            return ExitCode::from(exit_code_for(&error));
        }
    };

    env_logger::Builder::new()
        .parse_filters(&config.run.log_level)
        .try_init()
        .ok();

    let config_hash = commands::config_hash(common.config.as_deref());
    let result = match cli.command {
        Command::Generate { problems, .. } => {
            commands::generate(&config, &problems, &config_hash)
        }
        Command::Estimate {
            problems,
            problem_id,
            steps,
            ..
        } => commands::estimate(&config, &problems, problem_id.as_deref(), &steps),
        Command::Benchmark { .. } => commands::benchmark(&config),
        Command::Stats { dataset, .. } => commands::stats(&config, &dataset),
        Command::Train { dataset, .. } => commands::train(&config, &dataset),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
