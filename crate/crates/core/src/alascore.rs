//! Per-sample scoring and per-layer aggregation.
//!
//! For every kept sample: build the reference path once, then for each layer
//! compute the similarity matrix, run MAS, and take the mean absolute index
//! deviation between the MAS path and the reference path.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::masalign::{mas, path_distance, MasError};
use crate::simkernel::{layer_similarity, Pooling, SimError, ZeroPolicy};
use crate::tensorstore::{validate, Dataset, DatasetError, FindingKind, LoadedSample, ResponseRecord, ValidationReport};
use crate::wordmap::{timestamps_to_reference, Granularity, WordMapError};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("threshold {0} must lie in [-1, 1]")]
    Threshold(f64),
    #[error("layer {layer} is outside 0..={max}")]
    LayerOutOfRange { layer: usize, max: usize },
    #[error("empty layer selection")]
    EmptyLayerSelection,
    #[error("response record has neither embeddings nor a precomputed similarity")]
    MissingSimilarity,
    #[error("response embeddings differ in length: {audio} vs {text}")]
    EmbeddingLengthMismatch { audio: usize, text: usize },
    #[error("response embedding has zero norm")]
    ZeroNormEmbedding,
    #[error("no sample contributed a score")]
    NoContributions,
    #[error("samples disagree on the scored layers")]
    LayerSetMismatch,
    #[error("dataset does not validate ({} finding(s))", .0.findings.len())]
    Invalid(ValidationReport),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("sample {id}: {message}")]
    Sample { id: String, message: String },
}

pub type Result<T> = std::result::Result<T, ScoreError>;

/// How samples are weighted when averaging a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weight each sample by its number of audio frames.
    Frames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub granularity: Granularity,
    #[serde(serialize_with = "fixed6")]
    pub threshold: f64,
    pub pooling: Pooling,
    pub zero_policy: ZeroPolicy,
    /// Divide ALAS by `T - 1`.
    pub normalized: bool,
    pub weighting: Weighting,
    pub layers: Option<Vec<usize>>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            granularity: Granularity::Word,
            threshold: DEFAULT_THRESHOLD,
            pooling: Pooling::Mean,
            zero_policy: ZeroPolicy::Error,
            normalized: false,
            weighting: Weighting::Unweighted,
            layers: None,
        }
    }
}

impl ScoreConfig {
    /// Checks the config against a model with `num_layers` transformer layers.
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(ScoreError::Threshold(self.threshold));
        }
        if let Some(layers) = &self.layers {
            if layers.is_empty() {
                return Err(ScoreError::EmptyLayerSelection);
            }
            if let Some(&layer) = layers.iter().find(|&&l| l > num_layers) {
                return Err(ScoreError::LayerOutOfRange { layer, max: num_layers });
            }
        }
        Ok(())
    }

    /// Sorted, deduplicated layers to score.
    pub fn selected_layers(&self, num_layers: usize) -> Vec<usize> {
        match &self.layers {
            Some(ls) => {
                let mut ls = ls.clone();
                ls.sort_unstable();
                ls.dedup();
                ls
            }
            None => (0..=num_layers).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    InfeasiblePath,
    ReconstructionFailure,
    PairingFailure,
    ZeroNormLatent,
}

impl SkipReason {
    pub const ALL: [SkipReason; 4] = [
        SkipReason::InfeasiblePath,
        SkipReason::ReconstructionFailure,
        SkipReason::PairingFailure,
        SkipReason::ZeroNormLatent,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerScore {
    pub layer: usize,
    #[serde(serialize_with = "fixed6")]
    pub alas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub num_frames: usize,
    pub per_layer: Option<Vec<LayerScore>>,
    pub filtered_out: bool,
    #[serde(serialize_with = "fixed6_opt")]
    pub response_similarity: Option<f64>,
    pub skipped_reason: Option<SkipReason>,
}

impl SampleScore {
    fn without_scores(sample: &LoadedSample, response_similarity: Option<f64>) -> Self {
        Self {
            sample_id: sample.id.clone(),
            num_frames: sample.audio.seq_len(),
            per_layer: None,
            filtered_out: false,
            response_similarity,
            skipped_reason: None,
        }
    }

    fn skipped(sample: &LoadedSample, response_similarity: Option<f64>, reason: SkipReason) -> Self {
        Self { skipped_reason: Some(reason), ..Self::without_scores(sample, response_similarity) }
    }

    pub fn contributes(&self) -> bool {
        self.per_layer.is_some()
    }

    pub fn alas(&self, layer: usize) -> Option<f64> {
        self.per_layer.as_ref()?.iter().find(|s| s.layer == layer).map(|s| s.alas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub layer: usize,
    #[serde(serialize_with = "fixed6")]
    pub mean_alas: f64,
    #[serde(serialize_with = "fixed6")]
    pub std_alas: f64,
    pub n_samples: usize,
}

/// Similarity of the two generated responses.
pub fn response_similarity(rec: &ResponseRecord) -> Result<f64> {
    if let Some(s) = rec.precomputed_similarity {
        return Ok(s);
    }
    let (a, t) = match (&rec.audio_embedding, &rec.text_embedding) {
        (Some(a), Some(t)) => (a, t),
        _ => return Err(ScoreError::MissingSimilarity),
    };
    if a.len() != t.len() {
        return Err(ScoreError::EmbeddingLengthMismatch { audio: a.len(), text: t.len() });
    }
    let (mut dot, mut na, mut nt) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(t) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nt += y * y;
    }
    if na == 0.0 || nt == 0.0 {
        return Err(ScoreError::ZeroNormEmbedding);
    }
    Ok((dot / (na * nt).sqrt()).clamp(-1.0, 1.0))
}

/// Keep a pair iff its response similarity reaches the threshold.
pub fn filter_pair(rec: &ResponseRecord, threshold: f64) -> Result<bool> {
    Ok(response_similarity(rec)? >= threshold)
}

/// Scores one sample at the selected layers.
///
/// Data-level failures become a skip reason; only records that break a
/// validated invariant return an error.
pub fn score_sample(sample: &LoadedSample, frame_duration_ms: f64, layers: &[usize], config: &ScoreConfig) -> Result<SampleScore> {
    let sample_error = |message: String| ScoreError::Sample { id: sample.id.clone(), message };
    let similarity = sample.responses.as_ref().map(response_similarity).transpose()?;
    if let Some(s) = similarity {
        if s < config.threshold {
            return Ok(SampleScore { filtered_out: true, ..SampleScore::without_scores(sample, similarity) });
        }
    }

    let map = match sample.token_map() {
        Ok(m) => m,
        Err(_) => return Ok(SampleScore::skipped(sample, similarity, SkipReason::ReconstructionFailure)),
    };
    let frames = sample.audio.seq_len();
    let units = map.labels(config.granularity).len();
    if frames < units {
        return Ok(SampleScore::skipped(sample, similarity, SkipReason::InfeasiblePath));
    }
    let reference = match timestamps_to_reference(&sample.timestamps, frames, frame_duration_ms, &map, config.granularity) {
        Ok(r) => r,
        Err(WordMapError::PairingCoverage { .. }) => {
            return Ok(SampleScore::skipped(sample, similarity, SkipReason::PairingFailure))
        }
        Err(WordMapError::TooFewFrames { .. }) => {
            return Ok(SampleScore::skipped(sample, similarity, SkipReason::InfeasiblePath))
        }
        Err(e) => return Err(sample_error(e.to_string())),
    };

    let per_layer: std::result::Result<Vec<LayerScore>, SkipOrError> = layers
        .par_iter()
        .map(|&layer| {
            let s = layer_similarity(
                &sample.audio,
                &sample.text,
                &map,
                layer,
                config.granularity,
                config.pooling,
                config.zero_policy,
            )?;
            let path = mas(&s)?;
            let mut alas = path_distance(path.indices(), reference.indices())?;
            if config.normalized {
                alas = if units > 1 { alas / (units - 1) as f64 } else { 0.0 };
            }
            Ok(LayerScore { layer, alas })
        })
        .collect();

    match per_layer {
        Ok(per_layer) => Ok(SampleScore { per_layer: Some(per_layer), ..SampleScore::without_scores(sample, similarity) }),
        Err(SkipOrError::Skip(reason)) => Ok(SampleScore::skipped(sample, similarity, reason)),
        Err(SkipOrError::Error(message)) => Err(sample_error(message)),
    }
}

enum SkipOrError {
    Skip(SkipReason),
    Error(String),
}

impl From<SimError> for SkipOrError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ZeroNorm { .. } => SkipOrError::Skip(SkipReason::ZeroNormLatent),
            other => SkipOrError::Error(other.to_string()),
        }
    }
}

impl From<MasError> for SkipOrError {
    fn from(e: MasError) -> Self {
        match e {
            MasError::Infeasible { .. } => SkipOrError::Skip(SkipReason::InfeasiblePath),
            other => SkipOrError::Error(other.to_string()),
        }
    }
}

/// Per-layer mean and population standard deviation over contributing samples.
///
/// Values are summed in sorted order so the result does not depend on the
/// order of `scores`.
pub fn aggregate(scores: &[SampleScore], weighting: Weighting) -> Result<Vec<LayerReport>> {
    let contributing: Vec<&SampleScore> = scores.iter().filter(|s| s.contributes()).collect();
    let first = contributing.first().ok_or(ScoreError::NoContributions)?;
    let layers: Vec<usize> = first.per_layer.as_ref().expect("contributes").iter().map(|s| s.layer).collect();

    layers
        .iter()
        .map(|&layer| {
            let mut values = contributing
                .iter()
                .map(|s| {
                    let weight = match weighting {
                        Weighting::Unweighted => 1.0,
                        Weighting::Frames => s.num_frames as f64,
                    };
                    s.alas(layer).map(|x| (x, weight)).ok_or(ScoreError::LayerSetMismatch)
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

            let total_weight: f64 = values.iter().map(|v| v.1).sum();
            let mean = values.iter().map(|&(x, w)| x * w).sum::<f64>() / total_weight;
            let (min, max) = (values[0].0, values[values.len() - 1].0);
            let mean = mean.clamp(min, max);
            let var = values.iter().map(|&(x, w)| w * (x - mean) * (x - mean)).sum::<f64>() / total_weight;
            Ok(LayerReport { layer, mean_alas: mean, std_alas: var.sqrt(), n_samples: values.len() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub model_name: String,
    pub task: String,
    #[serde(serialize_with = "fixed6")]
    pub frame_duration_ms: f64,
    pub num_layers: usize,
    pub num_samples: usize,
}

/// The report written by `alas score`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: ScoreConfig,
    pub dataset: DatasetInfo,
    pub layers: Vec<LayerReport>,
    pub samples: Vec<SampleScore>,
    pub skipped: BTreeMap<SkipReason, usize>,
    pub filtered: usize,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Validates, scores every sample, and aggregates per layer.
///
/// Samples run in parallel on the current rayon pool; the report lists them
/// by id and is independent of scheduling.
pub fn score_dataset(ds: &Dataset, config: &ScoreConfig) -> Result<Report> {
    let manifest = ds.manifest();
    config.validate(manifest.num_layers)?;
    let validation = validate(ds);
    if validation.findings.iter().any(|f| f.kind != FindingKind::ReconstructionFailure) {
        return Err(ScoreError::Invalid(validation));
    }
    let layers = config.selected_layers(manifest.num_layers);

    let mut samples = manifest
        .samples
        .par_iter()
        .map(|entry| {
            let sample = ds.load_sample(entry)?;
            score_sample(&sample, manifest.frame_duration_ms, &layers, config)
        })
        .collect::<Result<Vec<SampleScore>>>()?;
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let layer_reports = aggregate(&samples, config.weighting)?;
    let mut skipped: BTreeMap<SkipReason, usize> = SkipReason::ALL.iter().map(|&r| (r, 0)).collect();
    for reason in samples.iter().filter_map(|s| s.skipped_reason) {
        *skipped.entry(reason).or_default() += 1;
    }
    let filtered = samples.iter().filter(|s| s.filtered_out).count();

    Ok(Report {
        config: config.clone(),
        dataset: DatasetInfo {
            model_name: manifest.model_name.clone(),
            task: manifest.task.clone(),
            frame_duration_ms: manifest.frame_duration_ms,
            num_layers: manifest.num_layers,
            num_samples: manifest.samples.len(),
        },
        layers: layer_reports,
        samples,
        skipped,
        filtered,
    })
}

fn fixed6<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let raw = serde_json::value::RawValue::from_string(format!("{x:.6}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

fn fixed6_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(x) => fixed6(x, s),
        None => s.serialize_none(),
    }
}
