//! `qdnas` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdnas_core::eval::EvaluatorKind;
use qdnas_core::llm::BackendKind;
use qdnas_core::persist::ExportTarget;
use qdnas_core::search::SearchMode;

#[derive(Parser)]
#[command(name = "qdnas", version, about = "Quality-diversity architecture search with code-generation operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run and write manifest, logs and snapshots to --out.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue a run from its snapshot.
    Resume {
        snapshot: PathBuf,
        /// Output directory; defaults to the snapshot's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a CSV view of a snapshot.
    Export {
        snapshot: PathBuf,
        /// network-archive, prompt-archive or curve.
        #[arg(long)]
        what: String,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print the effective configuration.
    ValidateConfig {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print a centroid set as JSON.
    GenCentroids {
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 25_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags that take precedence over the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<SearchMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    #[arg(long, value_parser = parse_evaluator)]
    evaluator: Option<EvaluatorKind>,
    #[arg(long)]
    worker_cmd: Option<String>,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "http" => Ok(BackendKind::Http),
        "scripted" => Ok(BackendKind::Scripted),
        "replay" => Ok(BackendKind::Replay),
        _ => Err(format!("unknown backend {s:?}; expected http, scripted or replay")),
    }
}

fn parse_evaluator(s: &str) -> Result<EvaluatorKind, String> {
    match s {
        "surrogate" => Ok(EvaluatorKind::Surrogate),
        "worker" => Ok(EvaluatorKind::Worker),
        _ => Err(format!("unknown evaluator {s:?}; expected surrogate or worker")),
    }
}

pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { overrides, out } => commands::run(&overrides, &out),
        Command::Resume { snapshot, out } => commands::resume(&snapshot, out.as_deref()),
        Command::Export { snapshot, what, out } => match what.parse::<ExportTarget>() {
            Ok(target) => commands::export(&snapshot, target, out.as_deref()),
            Err(e) => Err(CliError::Usage(e)),
        },
        Command::ValidateConfig { overrides } => commands::validate_config(&overrides),
        Command::GenCentroids { k, samples, seed, out } => commands::gen_centroids(k, samples, seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
