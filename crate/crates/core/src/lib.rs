//! Automatic Latent Alignment Score (ALAS).
//!
//! Measures how well a speech-text multimodal LLM aligns its audio and text
//! latents. For every layer, the cross-modal cosine-similarity matrix is
//! searched for the best monotonic alignment path, and that path is compared
//! against a reference path built from ASR word timestamps. The score is the
//! mean absolute index deviation per audio frame (lower is better).
//!
//! Module map:
//! - [`tensorstore`]: dataset container (manifest, `ALAS` tensor files, sidecars, validation)
//! - [`wordmap`]: token to word grouping and timestamp-derived reference paths
//! - [`simkernel`]: per-layer cosine-similarity matrices
//! - [`masalign`]: monotonic alignment search and its exhaustive oracle
//! - [`alascore`]: per-sample scoring, filtering and per-layer aggregation
//! - [`synthgen`]: synthetic datasets with planted alignments
//! - [`heatmap`]: CSV and SVG export of similarity matrices with path overlays

pub mod alascore;
pub mod heatmap;
pub mod masalign;
pub mod simkernel;
pub mod synthgen;
pub mod tensorstore;
pub mod wordmap;

pub use alascore::{
    aggregate, filter_pair, response_similarity, score_dataset, score_sample, LayerReport, Report,
    SampleScore, ScoreConfig, SkipReason,
};
pub use masalign::{brute_force_mas, mas, path_distance, AlignmentPath};
pub use simkernel::{cosine_matrix, layer_similarities, pool_to_words, Pooling, SimilarityMatrix, ZeroPolicy};
pub use tensorstore::{read_tensor, validate_dataset, write_tensor, Dataset, LatentStack};
pub use wordmap::{
    group_tokens, normalize_word, pair_words, timestamps_to_reference, Granularity, ReferencePath,
    TokenMap, WordTimestamps,
};
