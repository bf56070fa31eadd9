use std::io::ErrorKind;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::dataset::{is_valid_sample_id, read_json, read_stack, Dataset, DatasetError, ResponseRecord, SampleEntry};
use super::tensor::{LatentStack, TensorError};
use crate::wordmap::{TokensFile, WordMapError, WordTimestamps};

/// Class of a validation finding; serialized in snake_case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    ManifestInvalid,
    InvalidSampleId,
    DuplicateSampleId,
    NotTrimmed,
    UnsafePath,
    MissingFile,
    Io,
    BadMagic,
    UnsupportedVersion,
    BadRank,
    Truncated,
    TrailingBytes,
    DimsOverflow,
    ZeroDim,
    NotANumber,
    Infinite,
    HiddenDimMismatch,
    LayerCountMismatch,
    MalformedJson,
    TokenCountMismatch,
    InvalidTokenMap,
    ReconstructionFailure,
    InvalidTimestamps,
    InvalidResponses,
}

impl From<&TensorError> for FindingKind {
    fn from(e: &TensorError) -> Self {
        match e {
            TensorError::Io(io) if io.kind() == ErrorKind::NotFound => FindingKind::MissingFile,
            TensorError::Io(_) => FindingKind::Io,
            TensorError::BadMagic(_) => FindingKind::BadMagic,
            TensorError::UnsupportedVersion(_) => FindingKind::UnsupportedVersion,
            TensorError::BadRank(_) => FindingKind::BadRank,
            TensorError::Truncated { .. } | TensorError::ShapeMismatch { .. } => FindingKind::Truncated,
            TensorError::TrailingBytes { .. } => FindingKind::TrailingBytes,
            TensorError::DimsOverflow(_) => FindingKind::DimsOverflow,
            TensorError::ZeroDim(_) => FindingKind::ZeroDim,
            TensorError::NotANumber(_) => FindingKind::NotANumber,
            TensorError::Infinite(_) => FindingKind::Infinite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    /// `None` for manifest-level findings.
    pub sample: Option<String>,
    pub kind: FindingKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// True iff the dataset is scoreable.
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn kinds(&self) -> Vec<FindingKind> {
        self.findings.iter().map(|f| f.kind).collect()
    }

    pub fn for_sample<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Finding> + 'a {
        self.findings.iter().filter(move |f| f.sample.as_deref() == Some(id))
    }
}

struct Collector<'a> {
    sample: &'a str,
    findings: Vec<Finding>,
}

impl Collector<'_> {
    fn push(&mut self, kind: FindingKind, file: Option<&str>, message: impl Into<String>) {
        self.findings.push(Finding {
            sample: Some(self.sample.to_string()),
            kind,
            file: file.map(str::to_string),
            message: message.into(),
        });
    }

    /// Records a load failure, returning the loaded value on success.
    fn load<T>(&mut self, file: &str, result: Result<T, DatasetError>) -> Option<T> {
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                let kind = match &e {
                    DatasetError::Tensor { source, .. } => FindingKind::from(source),
                    DatasetError::Io { source, .. } if source.kind() == ErrorKind::NotFound => FindingKind::MissingFile,
                    DatasetError::Io { .. } => FindingKind::Io,
                    DatasetError::Json { .. } => FindingKind::MalformedJson,
                    DatasetError::UnsafePath(_) => FindingKind::UnsafePath,
                    _ => FindingKind::Io,
                };
                self.push(kind, Some(file), e.to_string());
                None
            }
        }
    }
}

fn check_stack(c: &mut Collector<'_>, file: &str, stack: &LatentStack, ds: &Dataset) {
    let m = ds.manifest();
    if stack.hidden_dim() != m.hidden_dim {
        c.push(
            FindingKind::HiddenDimMismatch,
            Some(file),
            format!("hidden_dim {} differs from manifest hidden_dim {}", stack.hidden_dim(), m.hidden_dim),
        );
    }
    if stack.num_layers_plus_one() != m.num_layers + 1 {
        c.push(
            FindingKind::LayerCountMismatch,
            Some(file),
            format!("{} layer slices, manifest num_layers {} implies {}", stack.num_layers_plus_one(), m.num_layers, m.num_layers + 1),
        );
    }
}

fn validate_sample(ds: &Dataset, entry: &SampleEntry, duplicate: bool) -> Vec<Finding> {
    let root: &Path = ds.root();
    let mut c = Collector { sample: &entry.id, findings: Vec::new() };
    if !is_valid_sample_id(&entry.id) {
        c.push(FindingKind::InvalidSampleId, None, format!("sample id {:?} must be lowercase alphanumerics, '-' or '_'", entry.id));
    }
    if duplicate {
        c.push(FindingKind::DuplicateSampleId, None, format!("sample id {:?} appears more than once", entry.id));
    }
    if !entry.trimmed {
        c.push(FindingKind::NotTrimmed, None, "instruction spans not trimmed; sample is not scoreable");
    }

    let audio = c.load(&entry.audio_tensor_path, read_stack(root, &entry.audio_tensor_path));
    if let Some(a) = &audio {
        check_stack(&mut c, &entry.audio_tensor_path, a, ds);
    }
    let text = c.load(&entry.text_tensor_path, read_stack(root, &entry.text_tensor_path));
    if let Some(t) = &text {
        check_stack(&mut c, &entry.text_tensor_path, t, ds);
    }

    let tokens: Option<TokensFile> = c.load(&entry.tokens_path, read_json(root, &entry.tokens_path));
    if let Some(tokens) = tokens {
        if let Some(t) = &text {
            if tokens.tokens.len() != t.seq_len() {
                c.push(
                    FindingKind::TokenCountMismatch,
                    Some(&entry.tokens_path),
                    format!("{} tokens for a text tensor of length {}", tokens.tokens.len(), t.seq_len()),
                );
            }
        }
        let explicit = tokens.word_of_token.is_some();
        if let Err(e) = tokens.into_token_map() {
            let kind = match e {
                WordMapError::Reconstruction { .. } if !explicit => FindingKind::ReconstructionFailure,
                _ => FindingKind::InvalidTokenMap,
            };
            c.push(kind, Some(&entry.tokens_path), e.to_string());
        }
    }

    let words: Option<WordTimestamps> = c.load(&entry.words_path, read_json(root, &entry.words_path));
    if let Some(Err(e)) = words.map(|w| w.validate()) {
        c.push(FindingKind::InvalidTimestamps, Some(&entry.words_path), e.to_string());
    }

    if let Some(path) = &entry.responses_path {
        let rec: Option<ResponseRecord> = c.load(path, read_json(root, path));
        for problem in rec.map(|r| r.problems()).unwrap_or_default() {
            c.push(FindingKind::InvalidResponses, Some(path), problem);
        }
    }
    c.findings
}

/// Checks every invariant of an opened dataset, collecting all findings.
pub fn validate(ds: &Dataset) -> ValidationReport {
    let m = ds.manifest();
    let mut findings: Vec<Finding> = m
        .problems()
        .into_iter()
        .map(|message| Finding { sample: None, kind: FindingKind::ManifestInvalid, file: None, message })
        .collect();
    let dups = m.duplicate_ids();
    let per_sample: Vec<Vec<Finding>> = m
        .samples
        .par_iter()
        .map(|entry| validate_sample(ds, entry, dups.contains(&entry.id)))
        .collect();
    findings.extend(per_sample.into_iter().flatten());
    ValidationReport { findings }
}

/// Opens `root/manifest.json` and validates the whole dataset.
///
/// Only an unreadable or unparsable manifest is an error; everything else
/// becomes a finding.
pub fn validate_dataset(root: impl AsRef<Path>) -> Result<ValidationReport, DatasetError> {
    Ok(validate(&Dataset::open(root)?))
}
