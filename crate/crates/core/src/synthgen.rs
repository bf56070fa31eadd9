//! Synthetic datasets with planted alignments.
//!
//! Every sample draws `W` unit word vectors that are pairwise well separated
//! (cosine below [`MAX_WORD_COSINE`]). Text latents hold one copy of the word
//! vector per token, audio latents one copy per frame of that word. Each
//! layer then adds i.i.d. Gaussian noise with per-component standard
//! deviation `noise_per_layer[layer]` and re-normalizes, so the planted
//! alignment is known and its recoverability degrades with the noise scale.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensorstore::{
    write_tensor, DatasetManifest, LatentStack, ResponseRecord, SampleEntry, TensorError, TokenizerGranularity,
    MANIFEST_FILE, MANIFEST_VERSION,
};
use crate::wordmap::{TimedWord, TokensFile, WordTimestamps};

/// Word vectors with a larger pairwise cosine are redrawn.
pub const MAX_WORD_COSINE: f64 = 0.8;
const MAX_DRAWS_PER_WORD: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("could not draw {words} separated word vectors in {dim} dimensions")]
    Separation { words: usize, dim: usize },
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_samples: usize,
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Inclusive `[min, max]` word count per sample.
    pub words_per_sample: [usize; 2],
    /// Inclusive `[min, max]` audio frames per word.
    pub frames_per_word: [usize; 2],
    /// Noise scale for layer indices `0..=num_layers`.
    pub noise_per_layer: Vec<f64>,
    pub seed: u64,
    pub tokenizer_granularity: TokenizerGranularity,
    pub frame_duration_ms: f64,
    pub model_name: String,
    pub task: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_samples: 8,
            num_layers: 4,
            hidden_dim: 64,
            words_per_sample: [8, 12],
            frames_per_word: [3, 7],
            noise_per_layer: vec![0.0, 0.05, 0.1, 0.2, 0.4],
            seed: 0,
            tokenizer_granularity: TokenizerGranularity::Word,
            frame_duration_ms: 20.0,
            model_name: "synthetic".into(),
            task: "synthetic".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SynthError::Config(msg));
        if self.num_samples == 0 {
            return fail("num_samples must be at least 1".into());
        }
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1".into());
        }
        if self.hidden_dim < 2 {
            return fail("hidden_dim must be at least 2".into());
        }
        let [wmin, wmax] = self.words_per_sample;
        if wmin == 0 || wmin > wmax {
            return fail(format!("words_per_sample {:?} must be a nonempty range starting at 1 or more", self.words_per_sample));
        }
        let [fmin, fmax] = self.frames_per_word;
        if fmin == 0 || fmin > fmax {
            return fail(format!("frames_per_word {:?} must be a nonempty range starting at 1 or more", self.frames_per_word));
        }
        if self.noise_per_layer.len() != self.num_layers + 1 {
            return fail(format!(
                "noise_per_layer has {} entries, expected num_layers + 1 = {}",
                self.noise_per_layer.len(),
                self.num_layers + 1
            ));
        }
        if self.noise_per_layer.iter().any(|n| !n.is_finite() || *n < 0.0) {
            return fail("noise_per_layer entries must be finite and non-negative".into());
        }
        if !(self.frame_duration_ms.is_finite() && self.frame_duration_ms > 0.0) {
            return fail(format!("frame_duration_ms must be positive, got {}", self.frame_duration_ms));
        }
        Ok(())
    }
}

/// One generated sample before it is written to disk.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub audio: LatentStack,
    pub text: LatentStack,
    pub tokens: TokensFile,
    pub timestamps: WordTimestamps,
    /// Word index of every audio frame.
    pub planted_path: Vec<usize>,
}

pub fn sample_id(index: usize) -> String {
    format!("sample-{index:04}")
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

fn word_vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Result<Vec<Array1<f64>>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let accepted = (0..MAX_DRAWS_PER_WORD)
            .map(|_| unit_gaussian(rng, dim))
            .find(|v| out.iter().all(|u| u.dot(v) < MAX_WORD_COSINE));
        match accepted {
            Some(v) => out.push(v),
            None => return Err(SynthError::Separation { words: count, dim }),
        }
    }
    Ok(out)
}

fn word_string(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(2..=7);
    (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
}

/// Splits a word into 1..=3 subword pieces, the first carrying a `▁` marker.
fn split_word(rng: &mut ChaCha8Rng, word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let pieces = rng.random_range(1..=chars.len().min(3));
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < pieces - 1 {
        let c = rng.random_range(1..chars.len());
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(chars.len());
    bounds
        .windows(2)
        .enumerate()
        .map(|(i, b)| {
            let piece: String = chars[b[0]..b[1]].iter().collect();
            if i == 0 {
                format!("\u{2581}{piece}")
            } else {
                piece
            }
        })
        .collect()
}

/// Latents for one modality: `owners[p]` is the word behind position `p`.
fn noisy_stack(rng: &mut ChaCha8Rng, vectors: &[Array1<f64>], owners: &[usize], noise: &[f64], dim: usize) -> Result<LatentStack> {
    let mut data = Array3::<f32>::zeros((noise.len(), owners.len(), dim));
    for (layer, &scale) in noise.iter().enumerate() {
        for (pos, &w) in owners.iter().enumerate() {
            let mut v = vectors[w].clone();
            if scale > 0.0 {
                for x in v.iter_mut() {
                    *x += scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let norm = v.dot(&v).sqrt();
            for (k, x) in v.iter().enumerate() {
                data[[layer, pos, k]] = (x / norm) as f32;
            }
        }
    }
    Ok(LatentStack::new(data)?)
}

/// Draws sample `index` from its own ChaCha stream.
pub fn generate_sample(config: &SynthConfig, index: usize) -> Result<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let [wmin, wmax] = config.words_per_sample;
    let num_words = rng.random_range(wmin..=wmax);
    let vectors = word_vectors(&mut rng, num_words, config.hidden_dim)?;
    let words: Vec<String> = (0..num_words).map(|_| word_string(&mut rng)).collect();

    let [fmin, fmax] = config.frames_per_word;
    let frame_counts: Vec<usize> = (0..num_words).map(|_| rng.random_range(fmin..=fmax)).collect();
    let planted_path: Vec<usize> = frame_counts.iter().enumerate().flat_map(|(w, &n)| std::iter::repeat_n(w, n)).collect();

    let (tokens, token_owner): (Vec<String>, Vec<usize>) = match config.tokenizer_granularity {
        TokenizerGranularity::Word => (words.clone(), (0..num_words).collect()),
        TokenizerGranularity::Subword => words
            .iter()
            .enumerate()
            .flat_map(|(w, word)| split_word(&mut rng, word).into_iter().map(move |t| (t, w)).collect::<Vec<_>>())
            .unzip(),
    };

    let text = noisy_stack(&mut rng, &vectors, &token_owner, &config.noise_per_layer, config.hidden_dim)?;
    let audio = noisy_stack(&mut rng, &vectors, &planted_path, &config.noise_per_layer, config.hidden_dim)?;

    let seconds = |frame: usize| frame as f64 * config.frame_duration_ms / 1000.0;
    let mut first_frame = 0;
    let timed = words
        .iter()
        .zip(&frame_counts)
        .map(|(word, &n)| {
            let entry = TimedWord { word: word.clone(), start: seconds(first_frame), end: seconds(first_frame + n) };
            first_frame += n;
            entry
        })
        .collect();

    Ok(SynthSample {
        id: sample_id(index),
        audio,
        text,
        tokens: TokensFile { tokens, words, word_of_token: None },
        timestamps: WordTimestamps::new(timed),
        planted_path,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| SynthError::Io { path: path.to_path_buf(), source })
}

/// Writes a complete dataset under `out_root` and returns its manifest.
pub fn generate(config: &SynthConfig, out_root: impl AsRef<Path>) -> Result<DatasetManifest> {
    config.validate()?;
    let root = out_root.as_ref();
    let mut entries = Vec::with_capacity(config.num_samples);
    for index in 0..config.num_samples {
        let sample = generate_sample(config, index)?;
        let rel = format!("samples/{}", sample.id);
        let dir = root.join(&rel);
        fs::create_dir_all(&dir).map_err(|source| SynthError::Io { path: dir.clone(), source })?;

        write_tensor(&sample.audio, dir.join("audio.alas"))?;
        write_tensor(&sample.text, dir.join("text.alas"))?;
        write_json(&dir.join("tokens.json"), &sample.tokens)?;
        write_json(&dir.join("words.json"), &sample.timestamps)?;
        let answer = format!("answer for {}", sample.id);
        write_json(
            &dir.join("responses.json"),
            &ResponseRecord {
                audio_response: answer.clone(),
                text_response: answer,
                precomputed_similarity: Some(1.0),
                ..Default::default()
            },
        )?;

        entries.push(SampleEntry {
            id: sample.id,
            audio_tensor_path: format!("{rel}/audio.alas"),
            text_tensor_path: format!("{rel}/text.alas"),
            tokens_path: format!("{rel}/tokens.json"),
            words_path: format!("{rel}/words.json"),
            responses_path: Some(format!("{rel}/responses.json")),
            trimmed: true,
        });
    }

    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        model_name: config.model_name.clone(),
        frame_duration_ms: config.frame_duration_ms,
        num_layers: config.num_layers,
        hidden_dim: config.hidden_dim,
        tokenizer_granularity: config.tokenizer_granularity,
        task: config.task.clone(),
        samples: entries,
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
