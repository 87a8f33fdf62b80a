//! Command-line front end: configuration, JSONL ingestion, report files and
//! the subcommands built on them.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Debug, Parser)]
#[command(
    name = "iclslope",
    version,
    about = "Measure in-context learning effectiveness with the learning-to-context slope"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a labeled dataset against retrieved demonstrations and fit LCS.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        pool: PathBuf,
    },
    /// Rerank retrieved demonstrations by learning gain.
    Select {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        pool: PathBuf,
    },
    /// Generate synthetic demonstrations, optionally fitting LCS without labels.
    Synthesize {
        #[arg(long)]
        dataset: PathBuf,
        /// Custom prompt with a `{question}` placeholder.
        #[arg(long)]
        prompt: Option<PathBuf>,
        /// Also score the synthetic demonstrations and write a report.
        #[arg(long)]
        fit: bool,
    },
    /// Restyle labeled reasoning in the model's own words.
    Paraphrase {
        #[arg(long)]
        dataset: PathBuf,
        /// Custom prompt with `{question}`, `{reasoning}` and `{answer}` placeholders.
        #[arg(long)]
        prompt: Option<PathBuf>,
    },
    /// Check the identities behind LCS on random finite distributions.
    OracleVerify {
        #[arg(long, default_value_t = 100)]
        worlds: usize,
    },
}
