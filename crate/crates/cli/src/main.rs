//! `morphalign`: build gold segmentation datasets from UD treebanks, score
//! tokenizers against them, compare rankings and relate alignment to
//! downstream performance.

mod build;
mod compare;
mod correlate;
mod error;
mod manifest;
mod output;
mod score;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(
    name = "morphalign",
    version,
    about = "Morphological alignment of subword tokenizers"
)]
struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, env = "MORPHALIGN_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a gold segmentation dataset from a treebank directory
    Build(build::BuildArgs),
    /// Score tokenizers against one or more datasets
    Score(score::ScoreArgs),
    /// Rank tokenizers across score files and flag rank flips
    Compare(compare::CompareArgs),
    /// Relate alignment scores to downstream task performance
    Correlate(correlate::CorrelateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Build(args) => build::run(args),
        Command::Score(args) => score::run(args),
        Command::Compare(args) => compare::run(args),
        Command::Correlate(args) => correlate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { exit, error }) => {
            let label = match exit {
                Exit::Usage => "usage error",
                Exit::Data => "data error",
                Exit::BelowThreshold => "below threshold",
                Exit::Io => "io error",
            };
            eprintln!("{label}: {error:#}");
            ExitCode::from(exit as u8)
        }
    }
}
