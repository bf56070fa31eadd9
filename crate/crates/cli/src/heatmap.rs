use std::fs;
use std::path::PathBuf;

use alas_core::heatmap::{render_csv, render_svg};
use alas_core::masalign::{mas, path_distance};
use alas_core::simkernel::layer_similarity;
use alas_core::tensorstore::Dataset;
use alas_core::wordmap::{timestamps_to_reference, Granularity};
use anyhow::anyhow;
use clap::Args;
use serde::Serialize;

use crate::{ensure_dir, AlignArgs, CmdResult, Failure};

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    /// Dataset root containing manifest.json
    pub root: PathBuf,

    /// Sample id to render
    #[arg(long)]
    pub sample: String,

    /// Comma-separated layer indices
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub layers: Vec<usize>,

    #[command(flatten)]
    pub align: AlignArgs,

    /// Output directory
    #[arg(short, long)]
    pub output: PathBuf,

    /// Print the written file list as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct LayerPath {
    layer: usize,
    path: Vec<usize>,
    score: f64,
    alas: f64,
}

#[derive(Serialize)]
struct PathExport {
    sample: String,
    granularity: Granularity,
    labels: Vec<String>,
    reference: Vec<usize>,
    layers: Vec<LayerPath>,
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<String>) -> CmdResult {
    fs::write(&path, contents).map_err(|e| Failure::data(anyhow!("cannot write {}: {e}", path.display())))?;
    written.push(path.display().to_string());
    Ok(())
}

pub fn run(args: HeatmapArgs) -> CmdResult {
    let ds = Dataset::open(&args.root).map_err(Failure::usage)?;
    let num_layers = ds.manifest().num_layers;
    if let Some(&bad) = args.layers.iter().find(|&&l| l > num_layers) {
        return Err(Failure::usage(anyhow!("layer {bad} is outside 0..={num_layers}")));
    }
    let entry = ds.entry(&args.sample).map_err(Failure::data)?;
    let sample = ds.load_sample(entry).map_err(Failure::data)?;
    let map = sample.token_map().map_err(|e| Failure::data(anyhow!("sample {}: {e}", sample.id)))?;
    let granularity: Granularity = args.align.granularity.into();
    let frames = sample.audio.seq_len();
    let reference = timestamps_to_reference(&sample.timestamps, frames, ds.manifest().frame_duration_ms, &map, granularity)
        .map_err(|e| Failure::data(anyhow!("sample {}: {e}", sample.id)))?;
    let labels = map.labels(granularity).to_vec();

    ensure_dir(&args.output)?;
    let mut written = Vec::new();
    let mut layers = Vec::new();
    for &layer in &args.layers {
        let sim = layer_similarity(
            &sample.audio,
            &sample.text,
            &map,
            layer,
            granularity,
            args.align.pooling.into(),
            args.align.zero_policy.into(),
        )
        .map_err(|e| Failure::data(anyhow!("sample {} layer {layer}: {e}", sample.id)))?;
        let path = mas(&sim).map_err(|e| Failure::data(anyhow!("sample {} layer {layer}: {e}", sample.id)))?;
        let alas = path_distance(path.indices(), reference.indices()).map_err(Failure::data)?;

        let stem = format!("{}.layer{layer}", sample.id);
        let csv = render_csv(&sim, &labels).map_err(Failure::data)?;
        write(args.output.join(format!("{stem}.csv")), &csv, &mut written)?;
        let title = format!("{} layer {layer}  ALAS {alas:.3}", sample.id);
        let svg = render_svg(&sim, &labels, reference.indices(), path.indices(), &title);
        write(args.output.join(format!("{stem}.svg")), &svg, &mut written)?;
        layers.push(LayerPath { layer, path: path.indices, score: path.score, alas });
    }

    let export = PathExport {
        sample: sample.id.clone(),
        granularity,
        labels,
        reference: reference.indices().to_vec(),
        layers,
    };
    let paths_json = serde_json::to_string_pretty(&export).map_err(Failure::data)? + "\n";
    write(args.output.join(format!("{}.paths.json", sample.id)), &paths_json, &mut written)?;

    if args.json {
        println!("{}", serde_json::to_string_pretty(&written).map_err(Failure::data)?);
    } else {
        for w in &written {
            println!("{w}");
        }
    }
    Ok(())
}
