//! `lprc`: generate paired circuit datasets, simulate decks, score
//! perception output, and run the simulate-then-reason pipeline.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 usage or
//! configuration error, 3 runtime failure.

mod cmds;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lprc", version, about = "Linear pure resistive circuit toolchain")]
struct Cli {
    /// Verbosity: error, warn, info, debug.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired dataset (layouts, plotting source, SPICE, results).
    Gen {
        /// Number of records.
        #[arg(long)]
        n: u64,
        /// Dataset seed; overrides the config file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Split ratio in tenths, e.g. 8:1:1.
        #[arg(long, default_value = "8:1:1")]
        split: String,
        /// Output directory.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Sampler config file (.toml or .json); defaults are built in.
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        /// Circuit kind override: numerical or label.
        #[arg(long)]
        kind: Option<String>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the manifest as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a SPICE deck and print the result dictionary.
    Simulate {
        /// Deck file.
        #[arg(long)]
        deck: std::path::PathBuf,
        /// Machine-readable output (JSON is the default output anyway).
        #[arg(long)]
        json: bool,
    },
    /// Score perception predictions against a generated gold split.
    EvalPpm {
        /// Directory of `{id}.sp` prediction files.
        #[arg(long)]
        pred: std::path::PathBuf,
        /// Dataset directory holding the gold split.
        #[arg(long)]
        gold: std::path::PathBuf,
        /// Split name: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Complexity-bin width for the scale report.
        #[arg(long, default_value_t = 5)]
        bin_width: usize,
        /// Write per-sample scores as JSONL here.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Worker threads for scoring.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the full report as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Run the perceive → refine → simulate → reason pipeline over problems.
    Run {
        /// Problems JSONL file.
        #[arg(long)]
        problems: std::path::PathBuf,
        /// Perception client: oracle, `file:<dir>`, or remote.
        #[arg(long)]
        ppm: String,
        /// Reasoning client: echo or remote.
        #[arg(long, default_value = "echo")]
        mllm: String,
        /// Dataset directory (required for --ppm oracle).
        #[arg(long)]
        dataset: Option<std::path::PathBuf>,
        /// Split providing oracle decks.
        #[arg(long, default_value = "test")]
        split: String,
        /// Transcript output JSONL.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Skip problems already present in the output file.
        #[arg(long)]
        resume: bool,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the batch report as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
}

/// Errors mapped onto the exit-code contract.
pub enum AppError {
    /// Exit 2: bad flags, bad config, missing files or env vars.
    Config(String),
    /// Exit 3: generation/simulation/runtime failure.
    Runtime(String),
}

impl AppError {
    fn exit(self) -> ExitCode {
        match self {
            AppError::Config(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            AppError::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(3)
            }
        }
    }
}

/// Minimal verbosity gate shared by the subcommands.
pub static LOG_LEVEL: std::sync::OnceLock<String> = std::sync::OnceLock::new();

pub fn log_info(msg: impl AsRef<str>) {
    let level = LOG_LEVEL.get().map(String::as_str).unwrap_or("warn");
    if matches!(level, "info" | "debug") {
        eprintln!("info: {}", msg.as_ref());
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout's consumer closes early (`lprc ... | head`),
    // like any other Unix CLI.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if !matches!(cli.log_level.as_str(), "error" | "warn" | "info" | "debug") {
        eprintln!("error: unknown log level `{}`", cli.log_level);
        return ExitCode::from(2);
    }
    LOG_LEVEL.set(cli.log_level.clone()).ok();
    let result = match cli.command {
        Command::Gen { n, seed, split, out, config, kind, jobs, json } => {
            cmds::gen(n, seed, &split, &out, config.as_deref(), kind.as_deref(), jobs, json)
        }
        Command::Simulate { deck, json } => cmds::simulate(&deck, json),
        Command::EvalPpm { pred, gold, split, bin_width, out, jobs, json } => {
            cmds::eval_ppm(&pred, &gold, &split, bin_width, out.as_deref(), jobs, json)
        }
        Command::Run { problems, ppm, mllm, dataset, split, out, resume, jobs, json } => {
            cmds::run(&problems, &ppm, &mllm, dataset.as_deref(), &split, &out, resume, jobs, json)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.exit(),
    }
}
