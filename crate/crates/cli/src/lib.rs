//! The `labelgen` command line: corpus preparation, training, generation,
//! evaluation and the decoder benchmark.

pub mod commands;
pub mod config;
mod output;

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{BenchArgs, CorpusArgs, EvaluateArgs, GenerateArgs, TrainArgs};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "labelgen", version, about = "Label-conditioned prescription generation")]
pub struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or load records, filter outliers and split train/valid/test.
    Corpus(CorpusArgs),
    /// Train a tokenizer and a scorer.
    Train(TrainArgs),
    /// Decode instructions for every label of a record file.
    Generate(GenerateArgs),
    /// Score generations against references; optionally run the NER study.
    Evaluate(EvaluateArgs),
    /// Time both decoders over growing output multipliers.
    Bench(BenchArgs),
}

/// Settings shared by every command after merging flags and the config file.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub config: RunConfig,
}

impl Context {
    pub const DEFAULT_OUT: &'static str = "out";

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from(Context::DEFAULT_OUT)),
        config,
    };
    match cli.command {
        Command::Corpus(args) => commands::corpus(&ctx, args),
        Command::Train(args) => commands::train(&ctx, args),
        Command::Generate(args) => commands::generate(&ctx, args),
        Command::Evaluate(args) => commands::evaluate(&ctx, args),
        Command::Bench(args) => commands::bench(&ctx, args),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

pub(crate) fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        anyhow::bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}
