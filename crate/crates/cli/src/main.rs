use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use cpword::corpus::CorpusError;
use cpword::generate::GenError;
use cpword::neural::NeuralError;
use cpword::registry::UnknownName;
use cpword::vocab::Task;

mod commands;
mod config;
mod io;

use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Model(_) => 3,
        }
    }
}

impl From<UnknownName> for CliError {
    fn from(e: UnknownName) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::Model(e.to_string())
    }
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|_| format!("expected `conditional` or `unconditional`, got `{s}`"))
}

#[derive(Debug, Parser)]
#[command(name = "cpword", version, about = "Compound-word music encoding, training, generation and evaluation")]
struct Cli {
    /// conditional or unconditional
    #[arg(long, global = true, value_parser = parse_task)]
    task: Option<Task>,
    /// Corpus representation: remi or cp.
    #[arg(long, global = true)]
    repr: Option<String>,
    /// Model preset: toy, paper or custom.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a directory of .mid/.json songs into a corpus file.
    Encode { input: PathBuf },
    /// Print sequence-length statistics for a directory of songs.
    Stats { input: PathBuf },
    /// Train on an encoded CP corpus.
    Train {
        /// Directory written by `encode --repr cp`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print the model size and memory estimate without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Sample songs from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Lead sheet file or directory (conditional checkpoints only).
        #[arg(long)]
        condition: Option<PathBuf>,
        #[arg(short, long)]
        n: Option<usize>,
        /// nucleus or greedy
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Score generated songs against their lead sheets.
    Evaluate { leads: PathBuf, generated: PathBuf },
    /// Print the vocabulary manifest and its hash.
    InspectVocab,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let flags = Overrides {
        task: cli.task,
        repr: cli.repr,
        preset: cli.preset,
        seed: cli.seed,
        out: cli.out,
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), &flags)?;
    match cli.command {
        Command::Encode { input } => commands::encode(&cfg, &input),
        Command::Stats { input } => commands::stats(&cfg, &input),
        Command::Train { corpus, steps, resume, dry_run } => {
            commands::train(&cfg, corpus.as_deref(), steps, resume.as_deref(), dry_run)
        }
        Command::Generate { checkpoint, condition, n, sampler, max_steps } => commands::generate(
            &cfg,
            &flags,
            commands::GenerateArgs { checkpoint, condition, n, sampler, max_steps },
        ),
        Command::Evaluate { leads, generated } => commands::evaluate(&cfg, &leads, &generated),
        Command::InspectVocab => commands::inspect_vocab(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
