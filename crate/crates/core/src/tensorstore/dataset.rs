use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::{read_tensor, LatentStack, TensorError};
use crate::wordmap::{TokenMap, TokensFile, WordMapError, WordTimestamps};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    ManifestIo { path: PathBuf, source: std::io::Error },
    #[error("cannot parse manifest {path}: {source}")]
    ManifestParse { path: PathBuf, source: serde_json::Error },
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
    #[error("{file}: {source}")]
    Tensor { file: String, source: TensorError },
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("{file}: {source}")]
    Json { file: String, source: serde_json::Error },
    #[error("{file}: {source}")]
    Words { file: String, source: WordMapError },
    #[error("path {0:?} must be relative and stay inside the dataset root")]
    UnsafePath(String),
    #[error("{0}")]
    Invalid(String),
}

/// Tokenizer family of the model that produced the text latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerGranularity {
    Word,
    Subword,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub audio_tensor_path: String,
    pub text_tensor_path: String,
    pub tokens_path: String,
    pub words_path: String,
    /// Absent for tasks without response filtering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses_path: Option<String>,
    pub trimmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub model_name: String,
    /// Milliseconds of audio per latent frame.
    pub frame_duration_ms: f64,
    /// Transformer layers, not counting layer 0.
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub tokenizer_granularity: TokenizerGranularity,
    pub task: String,
    pub samples: Vec<SampleEntry>,
}

/// Lowercase ASCII alphanumerics, `-` and `_`.
pub fn is_valid_sample_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
}

impl DatasetManifest {
    /// Manifest-level invariant violations, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.format_version != MANIFEST_VERSION {
            out.push(format!("unsupported manifest format_version {}", self.format_version));
        }
        if !(self.frame_duration_ms.is_finite() && self.frame_duration_ms > 0.0) {
            out.push(format!("frame_duration_ms must be positive, got {}", self.frame_duration_ms));
        }
        if self.num_layers == 0 {
            out.push("num_layers must be at least 1".into());
        }
        if self.hidden_dim == 0 {
            out.push("hidden_dim must be at least 1".into());
        }
        out
    }

    pub fn sample(&self, id: &str) -> Option<&SampleEntry> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn duplicate_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut dups: Vec<String> =
            self.samples.iter().filter(|s| !seen.insert(s.id.as_str())).map(|s| s.id.clone()).collect();
        dups.dedup();
        dups
    }
}

/// Generated answers for the audio- and text-prompted runs of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResponseRecord {
    pub audio_response: String,
    pub text_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precomputed_similarity: Option<f64>,
}

impl ResponseRecord {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let pair = match (&self.audio_embedding, &self.text_embedding) {
            (Some(a), Some(t)) => {
                if a.len() != t.len() {
                    out.push(format!("embedding lengths differ: {} vs {}", a.len(), t.len()));
                }
                if a.is_empty() {
                    out.push("embeddings are empty".into());
                }
                if a.iter().chain(t).any(|v| !v.is_finite()) {
                    out.push("embeddings contain non-finite values".into());
                }
                true
            }
            (None, None) => false,
            _ => {
                out.push("only one of the two embeddings is present".into());
                false
            }
        };
        match self.precomputed_similarity {
            Some(s) if !(-1.0..=1.0).contains(&s) => {
                out.push(format!("precomputed_similarity {s} is outside [-1, 1]"));
            }
            None if !pair => out.push("neither an embedding pair nor a precomputed similarity is present".into()),
            _ => {}
        }
        out
    }
}

/// Everything needed to score one sample.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub id: String,
    pub audio: LatentStack,
    pub text: LatentStack,
    pub tokens: TokensFile,
    pub timestamps: WordTimestamps,
    pub responses: Option<ResponseRecord>,
}

impl LoadedSample {
    pub fn token_map(&self) -> Result<TokenMap, WordMapError> {
        self.tokens.clone().into_token_map()
    }
}

/// A dataset directory with a parsed manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

/// Resolves a manifest-relative path, refusing absolute paths and `..`.
pub fn resolve(root: &Path, relative: &str) -> Result<PathBuf, DatasetError> {
    let rel = Path::new(relative);
    let safe = !relative.is_empty() && rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if !safe {
        return Err(DatasetError::UnsafePath(relative.to_string()));
    }
    Ok(root.join(rel))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(root: &Path, relative: &str) -> Result<T, DatasetError> {
    let path = resolve(root, relative)?;
    let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io { file: relative.to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json { file: relative.to_string(), source })
}

pub(crate) fn read_stack(root: &Path, relative: &str) -> Result<LatentStack, DatasetError> {
    let path = resolve(root, relative)?;
    read_tensor(&path).map_err(|source| DatasetError::Tensor { file: relative.to_string(), source })
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| DatasetError::ManifestIo { path: path.clone(), source })?;
        let manifest = serde_json::from_str(&text).map_err(|source| DatasetError::ManifestParse { path, source })?;
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn entry(&self, id: &str) -> Result<&SampleEntry, DatasetError> {
        self.manifest.sample(id).ok_or_else(|| DatasetError::UnknownSample(id.to_string()))
    }

    /// Reads every file of a sample and checks shapes against the manifest.
    pub fn load_sample(&self, entry: &SampleEntry) -> Result<LoadedSample, DatasetError> {
        let audio = read_stack(&self.root, &entry.audio_tensor_path)?;
        let text = read_stack(&self.root, &entry.text_tensor_path)?;
        let expected_layers = self.manifest.num_layers + 1;
        for (name, stack) in [("audio", &audio), ("text", &text)] {
            if stack.hidden_dim() != self.manifest.hidden_dim {
                return Err(DatasetError::Invalid(format!(
                    "{name} tensor hidden_dim {} differs from manifest hidden_dim {}",
                    stack.hidden_dim(),
                    self.manifest.hidden_dim
                )));
            }
            if stack.num_layers_plus_one() != expected_layers {
                return Err(DatasetError::Invalid(format!(
                    "{name} tensor has {} layer slices, manifest implies {expected_layers}",
                    stack.num_layers_plus_one()
                )));
            }
        }
        let tokens: TokensFile = read_json(&self.root, &entry.tokens_path)?;
        if tokens.tokens.len() != text.seq_len() {
            return Err(DatasetError::Invalid(format!(
                "{} tokens for a text tensor of length {}",
                tokens.tokens.len(),
                text.seq_len()
            )));
        }
        let timestamps: WordTimestamps = read_json(&self.root, &entry.words_path)?;
        timestamps
            .validate()
            .map_err(|source| DatasetError::Words { file: entry.words_path.clone(), source })?;
        let responses = match &entry.responses_path {
            Some(p) => {
                let rec: ResponseRecord = read_json(&self.root, p)?;
                if let Some(problem) = rec.problems().into_iter().next() {
                    return Err(DatasetError::Invalid(format!("{p}: {problem}")));
                }
                Some(rec)
            }
            None => None,
        };
        Ok(LoadedSample { id: entry.id.clone(), audio, text, tokens, timestamps, responses })
    }
}
