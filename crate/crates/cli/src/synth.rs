use std::fs;
use std::path::PathBuf;

use alas_core::synthgen::{generate, SynthConfig, SynthError};
use alas_core::tensorstore::MANIFEST_FILE;
use anyhow::{anyhow, Context};
use clap::Args;
use serde::Serialize;

use crate::{CmdResult, Failure};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON synth config; missing fields take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output dataset root
    #[arg(short, long)]
    pub output: PathBuf,

    /// Overwrite an existing dataset at the output root
    #[arg(long)]
    pub force: bool,

    /// Print a JSON summary
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct Summary {
    root: String,
    num_samples: usize,
    seed: u64,
}

pub fn run(args: SynthArgs) -> CmdResult {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::usage)?;
            serde_json::from_str::<SynthConfig>(&text)
                .with_context(|| format!("cannot parse {}", path.display()))
                .map_err(Failure::usage)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(Failure::usage)?;
    if args.output.join(MANIFEST_FILE).exists() && !args.force {
        return Err(Failure::usage(anyhow!(
            "{} already holds a dataset; pass --force to overwrite",
            args.output.display()
        )));
    }

    let manifest = generate(&config, &args.output).map_err(|e| match e {
        SynthError::Config(_) => Failure::usage(e),
        other => Failure::data(other),
    })?;
    if args.json {
        let summary = Summary {
            root: args.output.display().to_string(),
            num_samples: manifest.samples.len(),
            seed: config.seed,
        };
        println!("{}", serde_json::to_string_pretty(&summary).map_err(Failure::data)?);
    } else {
        println!("{}", args.output.display());
    }
    Ok(())
}
