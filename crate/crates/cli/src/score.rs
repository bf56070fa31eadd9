use std::fs;
use std::path::PathBuf;

use alas_core::alascore::{score_dataset, Report, ScoreConfig, ScoreError, Weighting};
use alas_core::tensorstore::Dataset;
use anyhow::anyhow;
use clap::Args;

use crate::validate::print_findings;
use crate::{ensure_dir, AlignArgs, CmdResult, Failure};

pub const REPORT_FILE: &str = "report.json";

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Dataset root containing manifest.json
    pub root: PathBuf,

    #[command(flatten)]
    pub align: AlignArgs,

    /// Keep pairs whose response similarity is at least this value
    #[arg(long, default_value_t = 0.7, allow_negative_numbers = true)]
    pub threshold: f64,

    /// Comma-separated layer indices to score (default: all)
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,

    /// Divide ALAS by the number of text positions minus one
    #[arg(long)]
    pub normalized: bool,

    /// Weight samples by audio length when averaging a layer
    #[arg(long)]
    pub length_weighted: bool,

    /// Output directory for report.json
    #[arg(short, long)]
    pub output: PathBuf,

    /// Print the report JSON on standard output instead of the table
    #[arg(long)]
    pub json: bool,
}

fn print_table(report: &Report) {
    println!("{:>5}  {:>10}  {:>10}  {:>6}", "layer", "mean_alas", "std_alas", "n");
    for l in &report.layers {
        println!("{:>5}  {:>10.6}  {:>10.6}  {:>6}", l.layer, l.mean_alas, l.std_alas, l.n_samples);
    }
    let skipped: usize = report.skipped.values().sum();
    println!(
        "scored {} of {} samples ({} filtered, {} skipped)",
        report.layers.first().map_or(0, |l| l.n_samples),
        report.samples.len(),
        report.filtered,
        skipped
    );
}

pub fn run(args: ScoreArgs) -> CmdResult {
    let config = ScoreConfig {
        granularity: args.align.granularity.into(),
        threshold: args.threshold,
        pooling: args.align.pooling.into(),
        zero_policy: args.align.zero_policy.into(),
        normalized: args.normalized,
        weighting: if args.length_weighted { Weighting::Frames } else { Weighting::Unweighted },
        layers: args.layers,
    };
    if !(-1.0..=1.0).contains(&config.threshold) {
        return Err(Failure::usage(ScoreError::Threshold(config.threshold)));
    }
    let ds = Dataset::open(&args.root).map_err(Failure::usage)?;
    config.validate(ds.manifest().num_layers).map_err(Failure::usage)?;

    let report = match score_dataset(&ds, &config) {
        Ok(r) => r,
        Err(ScoreError::Invalid(findings)) => {
            print_findings(&findings);
            return Err(Failure::data(anyhow!("dataset does not validate; run `alas validate` for details")));
        }
        Err(ScoreError::NoContributions) => {
            return Err(Failure::data(anyhow!("no scoreable samples")));
        }
        Err(e) => return Err(Failure::data(e)),
    };

    ensure_dir(&args.output)?;
    let json = report.to_json();
    let path = args.output.join(REPORT_FILE);
    fs::write(&path, &json).map_err(|e| Failure::data(anyhow!("cannot write {}: {e}", path.display())))?;
    if args.json {
        print!("{json}");
    } else {
        print_table(&report);
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
