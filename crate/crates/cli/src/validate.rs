use std::path::PathBuf;

use alas_core::tensorstore::{validate_dataset, ValidationReport};
use clap::Args;
use serde::Serialize;

use crate::{CmdResult, Failure};

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Dataset root containing manifest.json
    pub root: PathBuf,

    /// Print findings as JSON on standard output
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct JsonOutput<'a> {
    ok: bool,
    findings: &'a ValidationReport,
}

pub fn print_findings(report: &ValidationReport) {
    for f in &report.findings {
        let sample = f.sample.as_deref().unwrap_or("<manifest>");
        let kind = serde_json::to_value(f.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        match &f.file {
            Some(file) => eprintln!("{sample}: {kind}: {file}: {}", f.message),
            None => eprintln!("{sample}: {kind}: {}", f.message),
        }
    }
}

pub fn run(args: ValidateArgs) -> CmdResult {
    let report = validate_dataset(&args.root).map_err(Failure::usage)?;
    if args.json {
        let out = JsonOutput { ok: report.is_empty(), findings: &report };
        println!("{}", serde_json::to_string_pretty(&out).map_err(Failure::data)?);
    } else {
        print_findings(&report);
    }
    if report.is_empty() {
        if !args.json {
            eprintln!("{}: ok", args.root.display());
        }
        Ok(())
    } else {
        Err(Failure::data(anyhow::anyhow!("{} finding(s)", report.findings.len())))
    }
}
