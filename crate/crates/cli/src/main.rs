//! `alas`: validate datasets, score them, draw heatmaps, and generate
//! synthetic fixtures.
//!
//! Exit codes: 0 success, 1 data-level failure, 2 usage or config failure.
//! `ALAS_THREADS` caps the worker pool used for per-sample parallelism.

mod heatmap;
mod score;
mod synth;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use alas_core::simkernel::{Pooling, ZeroPolicy};
use alas_core::wordmap::Granularity;
use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "alas", version, about = "Automatic Latent Alignment Score for speech-text LLM latents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset against every format invariant
    Validate(validate::ValidateArgs),
    /// Score every sample and write a per-layer report
    Score(score::ScoreArgs),
    /// Export similarity CSV and SVG heatmaps with path overlays for one sample
    Heatmap(heatmap::HeatmapArgs),
    /// Generate a synthetic dataset with planted alignments
    Synth(synth::SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GranularityArg {
    Word,
    Token,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Word => Granularity::Word,
            GranularityArg::Token => Granularity::Token,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Last,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Last => Pooling::Last,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ZeroPolicyArg {
    Error,
    Zero,
}

impl From<ZeroPolicyArg> for ZeroPolicy {
    fn from(z: ZeroPolicyArg) -> Self {
        match z {
            ZeroPolicyArg::Error => ZeroPolicy::Error,
            ZeroPolicyArg::Zero => ZeroPolicy::Zero,
        }
    }
}

/// Options shared by the commands that build similarity matrices.
#[derive(Args, Debug, Clone)]
pub struct AlignArgs {
    /// Text axis unit
    #[arg(long, value_enum, default_value = "word")]
    pub granularity: GranularityArg,

    /// How subword latents are combined into word latents
    #[arg(long, value_enum, default_value = "mean")]
    pub pooling: PoolingArg,

    /// Handling of zero-norm latent vectors
    #[arg(long, value_enum, default_value = "error")]
    pub zero_policy: ZeroPolicyArg,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1.
    Data(anyhow::Error),
    /// Exit 2.
    Usage(anyhow::Error),
}

impl Failure {
    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Failure::Data(e.into())
    }

    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ALAS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(anyhow!("ALAS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Failure::usage)
}

pub fn ensure_dir(path: &PathBuf) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::data(anyhow!("cannot create {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Validate(args) => validate::run(args),
        Command::Score(args) => score::run(args),
        Command::Heatmap(args) => heatmap::run(args),
        Command::Synth(args) => synth::run(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
