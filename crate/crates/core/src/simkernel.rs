//! Cross-modal cosine-similarity matrices.
//!
//! Rows of every matrix are text positions (words or tokens) and columns are
//! audio frames. Dot products and norms accumulate in `f64`; the matrix is
//! stored as `f32`. Values are raw cosines in `[-1, 1]`, never rescaled.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensorstore::LatentStack;
use crate::wordmap::{Granularity, TokenMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("latent dimension mismatch: text has {text}, audio has {audio}")]
    DimensionMismatch { text: usize, audio: usize },
    #[error("{modality} vector {index} has zero norm")]
    ZeroNorm { modality: &'static str, index: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("token map has {expected} tokens but the text latents have {found} rows")]
    LengthMismatch { expected: usize, found: usize },
    #[error("text stack has {text} layers, audio stack has {audio}")]
    LayerCountMismatch { text: usize, audio: usize },
}

pub type Result<T> = std::result::Result<T, SimError>;

/// What to do with an all-zero latent vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPolicy {
    /// Fail: a zero latent points to an extraction bug.
    #[default]
    Error,
    /// Treat every similarity involving the zero vector as 0.
    Zero,
}

/// How subword rows are combined into one word row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Last,
}

/// Cosine similarities of one layer, text rows by audio columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub layer: usize,
    values: Array2<f32>,
}

impl SimilarityMatrix {
    pub fn new(layer: usize, values: Array2<f32>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(SimError::Empty("similarity matrix"));
        }
        Ok(Self { layer, values })
    }

    /// Number of text positions (T).
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of audio frames (A).
    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, text: usize, frame: usize) -> f32 {
        self.values[[text, frame]]
    }

    pub fn values(&self) -> ArrayView2<'_, f32> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }
}

fn norms(rows: ArrayView2<'_, f32>) -> Vec<f64> {
    rows.outer_iter()
        .map(|r| r.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt())
        .collect()
}

fn check_norms(norms: &[f64], modality: &'static str, policy: ZeroPolicy) -> Result<()> {
    if policy == ZeroPolicy::Error {
        if let Some(index) = norms.iter().position(|&n| n == 0.0) {
            return Err(SimError::ZeroNorm { modality, index });
        }
    }
    Ok(())
}

/// Cosine similarity of every text row with every audio row.
///
/// Entry `(j, i)` is `<a_i, t_j> / (|a_i| |t_j|)`.
pub fn cosine_matrix(text: ArrayView2<'_, f32>, audio: ArrayView2<'_, f32>, zero_policy: ZeroPolicy) -> Result<Array2<f32>> {
    if text.ncols() != audio.ncols() {
        return Err(SimError::DimensionMismatch { text: text.ncols(), audio: audio.ncols() });
    }
    if text.nrows() == 0 {
        return Err(SimError::Empty("text latents"));
    }
    if audio.nrows() == 0 {
        return Err(SimError::Empty("audio latents"));
    }
    let text_norms = norms(text);
    let audio_norms = norms(audio);
    check_norms(&text_norms, "text", zero_policy)?;
    check_norms(&audio_norms, "audio", zero_policy)?;

    let mut out = Array2::<f32>::zeros((text.nrows(), audio.nrows()));
    for (j, t) in text.outer_iter().enumerate() {
        if text_norms[j] == 0.0 {
            continue;
        }
        for (i, a) in audio.outer_iter().enumerate() {
            if audio_norms[i] == 0.0 {
                continue;
            }
            let dot: f64 = t.iter().zip(a.iter()).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
            out[[j, i]] = (dot / (text_norms[j] * audio_norms[i])) as f32;
        }
    }
    Ok(out)
}

/// Collapses token rows into word rows.
pub fn pool_to_words(text: ArrayView2<'_, f32>, map: &TokenMap, pooling: Pooling) -> Result<Array2<f32>> {
    if text.nrows() != map.num_tokens() {
        return Err(SimError::LengthMismatch { expected: map.num_tokens(), found: text.nrows() });
    }
    if map.is_identity() {
        return Ok(text.to_owned());
    }
    let mut out = Array2::<f32>::zeros((map.num_words(), text.ncols()));
    for (w, mut row) in out.outer_iter_mut().enumerate() {
        let span = map.token_span(w);
        match pooling {
            Pooling::Last => row.assign(&text.row(span.end - 1)),
            Pooling::Mean => {
                let count = span.len() as f64;
                for k in 0..text.ncols() {
                    let sum: f64 = span.clone().map(|t| f64::from(text[[t, k]])).sum();
                    row[k] = (sum / count) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Text rows of one layer at the requested granularity.
pub fn text_rows(text: &LatentStack, layer: usize, map: &TokenMap, granularity: Granularity, pooling: Pooling) -> Result<Array2<f32>> {
    let rows = text.layer(layer);
    match granularity {
        Granularity::Word => pool_to_words(rows, map, pooling),
        Granularity::Token => {
            if rows.nrows() != map.num_tokens() {
                return Err(SimError::LengthMismatch { expected: map.num_tokens(), found: rows.nrows() });
            }
            Ok(rows.to_owned())
        }
    }
}

/// Similarity matrix for a single layer.
pub fn layer_similarity(
    audio: &LatentStack,
    text: &LatentStack,
    map: &TokenMap,
    layer: usize,
    granularity: Granularity,
    pooling: Pooling,
    zero_policy: ZeroPolicy,
) -> Result<SimilarityMatrix> {
    let text_layer = text_rows(text, layer, map, granularity, pooling)?;
    let values = cosine_matrix(text_layer.view(), audio.layer(layer), zero_policy)?;
    SimilarityMatrix::new(layer, values)
}

/// One similarity matrix per layer index `0..=L`.
pub fn layer_similarities(
    audio: &LatentStack,
    text: &LatentStack,
    map: &TokenMap,
    granularity: Granularity,
    pooling: Pooling,
    zero_policy: ZeroPolicy,
) -> Result<Vec<SimilarityMatrix>> {
    if audio.hidden_dim() != text.hidden_dim() {
        return Err(SimError::DimensionMismatch { text: text.hidden_dim(), audio: audio.hidden_dim() });
    }
    if audio.num_layers_plus_one() != text.num_layers_plus_one() {
        return Err(SimError::LayerCountMismatch { text: text.num_layers_plus_one(), audio: audio.num_layers_plus_one() });
    }
    (0..audio.num_layers_plus_one())
        .map(|l| layer_similarity(audio, text, map, l, granularity, pooling, zero_policy))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_and_orthogonal() {
        let s = cosine_matrix(array![[1.0f32, 0.0]].view(), array![[1.0f32, 0.0]].view(), ZeroPolicy::Error).unwrap();
        assert_eq!(s, array![[1.0f32]]);
        let s = cosine_matrix(array![[1.0f32, 0.0]].view(), array![[0.0f32, 1.0]].view(), ZeroPolicy::Error).unwrap();
        assert_eq!(s, array![[0.0f32]]);
    }

    #[test]
    fn hand_computed_two_by_three() {
        let t = array![[1.0f32, 0.0], [0.0, 1.0]];
        let a = array![[2.0f32, 0.0], [1.0, 1.0], [0.0, 3.0]];
        let s = cosine_matrix(t.view(), a.view(), ZeroPolicy::Error).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let expected = array![[1.0f32, h, 0.0], [0.0, h, 1.0]];
        for (x, y) in s.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let err = cosine_matrix(array![[1.0f32, 0.0]].view(), array![[1.0f32, 0.0, 0.0]].view(), ZeroPolicy::Error)
            .unwrap_err();
        assert_eq!(err, SimError::DimensionMismatch { text: 2, audio: 3 });
    }

    #[test]
    fn zero_policy() {
        let t = array![[0.0f32, 0.0], [1.0, 0.0]];
        let a = array![[1.0f32, 0.0]];
        assert_eq!(
            cosine_matrix(t.view(), a.view(), ZeroPolicy::Error).unwrap_err(),
            SimError::ZeroNorm { modality: "text", index: 0 }
        );
        let s = cosine_matrix(t.view(), a.view(), ZeroPolicy::Zero).unwrap();
        assert_eq!(s, array![[0.0f32], [1.0]]);
    }

    fn map(tokens: &[&str], words: &[&str], groups: &[usize]) -> TokenMap {
        TokenMap::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            words.iter().map(|s| s.to_string()).collect(),
            groups.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn mean_pooling_examples() {
        let m = map(&["a", "b"], &["ab"], &[0, 0]);
        let pooled = pool_to_words(array![[2.0f32, 0.0], [0.0, 2.0]].view(), &m, Pooling::Mean).unwrap();
        assert_eq!(pooled, array![[1.0f32, 1.0]]);

        let m = map(&["a", "b", "c"], &["ab", "c"], &[0, 0, 1]);
        let pooled =
            pool_to_words(array![[1.0f32, 1.0], [3.0, 3.0], [5.0, 5.0]].view(), &m, Pooling::Mean).unwrap();
        assert_eq!(pooled, array![[2.0f32, 2.0], [5.0, 5.0]]);

        let pooled =
            pool_to_words(array![[1.0f32, 1.0], [3.0, 3.0], [5.0, 5.0]].view(), &m, Pooling::Last).unwrap();
        assert_eq!(pooled, array![[3.0f32, 3.0], [5.0, 5.0]]);
    }

    #[test]
    fn identity_pooling_returns_input() {
        let m = map(&["x", "y"], &["x", "y"], &[0, 1]);
        let rows = array![[0.25f32, -1.5], [3.0, 7.0]];
        assert_eq!(pool_to_words(rows.view(), &m, Pooling::Mean).unwrap(), rows);
    }

    #[test]
    fn pooling_length_mismatch() {
        let m = map(&["a", "b"], &["ab"], &[0, 0]);
        assert_eq!(
            pool_to_words(array![[1.0f32]].view(), &m, Pooling::Mean).unwrap_err(),
            SimError::LengthMismatch { expected: 2, found: 1 }
        );
    }
}
