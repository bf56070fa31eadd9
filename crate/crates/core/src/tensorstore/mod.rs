//! Dataset container: manifest, `ALAS` tensor files, sidecars, validation.
//!
//! ```text
//! root/
//!   manifest.json
//!   <paths named by each sample entry>
//!     audio tensor   (layers + 1, audio_frames, hidden_dim)
//!     text tensor    (layers + 1, text_tokens, hidden_dim)
//!     tokens.json    {"tokens": [...], "words": [...], "word_of_token": [...]?}
//!     words.json     {"words": [{"word": .., "start": s, "end": s}, ...]}
//!     responses.json (optional) response texts, embeddings, similarity
//! ```

mod dataset;
mod tensor;
mod validate;

pub use dataset::{
    is_valid_sample_id, resolve, Dataset, DatasetError, DatasetManifest, LoadedSample, ResponseRecord, SampleEntry,
    TokenizerGranularity, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use tensor::{
    decode_tensor, encode_tensor, read_tensor, write_tensor, LatentStack, TensorError, FORMAT_VERSION, HEADER_LEN,
    MAGIC,
};
pub use validate::{validate, validate_dataset, Finding, FindingKind, ValidationReport};
