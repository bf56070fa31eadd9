//! Word boundaries, word timestamps and reference paths.
//!
//! The text latents are indexed by tokenizer tokens, while ASR timestamps are
//! indexed by words. This module groups tokens into words, pairs ASR words
//! with the transcript words, and turns the timestamps into a per-frame
//! reference path over either word or token indices.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Minimum fraction of tokenizer words that must pair with an ASR word.
pub const MIN_PAIRING_COVERAGE: f64 = 0.8;

/// Word-start markers emitted by common subword tokenizers.
const TOKEN_MARKERS: &[char] = &['\u{2581}', '\u{0120}'];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordMapError {
    #[error("token stream cannot be segmented into the word list (first mismatch at token {position})")]
    Reconstruction { position: usize },
    #[error("invalid token map: {0}")]
    InvalidTokenMap(String),
    #[error("only {paired} of {total} transcript words paired with timestamped words (need 80%)")]
    PairingCoverage { paired: usize, total: usize },
    #[error("empty word list")]
    EmptyWords,
    #[error("empty timestamp list")]
    EmptyTimestamps,
    #[error("invalid timestamp at entry {index}: {reason}")]
    InvalidTimestamp { index: usize, reason: String },
    #[error("frame duration must be a positive finite number of milliseconds, got {0}")]
    InvalidFrameDuration(f64),
    #[error("cannot build a reference path over {units} units from {frames} frame(s)")]
    TooFewFrames { frames: usize, units: usize },
}

pub type Result<T> = std::result::Result<T, WordMapError>;

/// Unit of the text axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Word,
    Token,
}

/// Lowercase, Unicode NFC, strip leading and trailing punctuation.
///
/// Internal punctuation such as apostrophes is kept: `"don't"` stays `"don't"`.
pub fn normalize_word(raw: &str) -> String {
    let composed: String = raw.to_lowercase().nfc().collect();
    composed.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

fn strip_marker(token: &str) -> &str {
    token.trim_start_matches(TOKEN_MARKERS)
}

fn has_alphanumeric(s: &str) -> bool {
    s.chars().any(char::is_alphanumeric)
}

/// Tokens of the text sequence grouped into words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMap {
    tokens: Vec<String>,
    word_of_token: Vec<usize>,
    words: Vec<String>,
}

impl TokenMap {
    /// Builds a map from an explicit grouping, checking every invariant.
    pub fn new(tokens: Vec<String>, words: Vec<String>, word_of_token: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() || words.is_empty() {
            return Err(WordMapError::InvalidTokenMap("tokens and words must be nonempty".into()));
        }
        if word_of_token.len() != tokens.len() {
            return Err(WordMapError::InvalidTokenMap(format!(
                "word_of_token has {} entries for {} tokens",
                word_of_token.len(),
                tokens.len()
            )));
        }
        if word_of_token[0] != 0 {
            return Err(WordMapError::InvalidTokenMap("first token must belong to word 0".into()));
        }
        for (pos, pair) in word_of_token.windows(2).enumerate() {
            if pair[1] < pair[0] || pair[1] - pair[0] > 1 {
                return Err(WordMapError::InvalidTokenMap(format!(
                    "word_of_token jumps from {} to {} at token {}",
                    pair[0],
                    pair[1],
                    pos + 1
                )));
            }
        }
        let last = *word_of_token.last().expect("nonempty");
        if last != words.len() - 1 {
            return Err(WordMapError::InvalidTokenMap(format!(
                "last token belongs to word {last} but there are {} words",
                words.len()
            )));
        }
        let map = Self { tokens, word_of_token, words };
        for w in 0..map.words.len() {
            let joined: String = map.token_span(w).map(|t| strip_marker(&map.tokens[t])).collect();
            if normalize_word(&joined) != normalize_word(&map.words[w]) {
                return Err(WordMapError::InvalidTokenMap(format!(
                    "tokens of word {w} spell {:?}, expected {:?}",
                    normalize_word(&joined),
                    normalize_word(&map.words[w])
                )));
            }
        }
        Ok(map)
    }

    /// One token per word.
    pub fn identity(words: Vec<String>) -> Result<Self> {
        let n = words.len();
        Self::new(words.clone(), words, (0..n).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_of_token(&self) -> &[usize] {
        &self.word_of_token
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn is_identity(&self) -> bool {
        self.tokens.len() == self.words.len()
    }

    /// Contiguous token range owned by word `w`.
    pub fn token_span(&self, w: usize) -> Range<usize> {
        let start = self.word_of_token.partition_point(|&x| x < w);
        let end = self.word_of_token.partition_point(|&x| x <= w);
        start..end
    }

    pub fn last_token_of(&self, w: usize) -> usize {
        self.token_span(w).end - 1
    }

    /// Labels for the text axis at the given granularity.
    pub fn labels(&self, granularity: Granularity) -> &[String] {
        match granularity {
            Granularity::Word => &self.words,
            Granularity::Token => &self.tokens,
        }
    }
}

/// Greedy left-to-right grouping of tokens into words.
///
/// Tokens accumulate into the current word until their normalized
/// concatenation equals the normalized word. Punctuation-only tokens that
/// follow a completed word stay with it.
pub fn group_tokens(tokens: &[String], words: &[String]) -> Result<TokenMap> {
    if words.is_empty() {
        return Err(WordMapError::EmptyWords);
    }
    if tokens.is_empty() {
        return Err(WordMapError::Reconstruction { position: 0 });
    }
    let targets: Vec<String> = words.iter().map(|w| normalize_word(w)).collect();
    let mut word_of_token = Vec::with_capacity(tokens.len());
    let mut word = 0usize;
    let mut acc = String::new();
    let mut owned = 0usize;

    for (position, token) in tokens.iter().enumerate() {
        let piece = strip_marker(token);
        if owned > 0 && normalize_word(&acc) == targets[word] {
            let next_is_punct = word + 1 < words.len() && targets[word + 1].is_empty();
            if !has_alphanumeric(piece) && !next_is_punct {
                // trailing punctuation of a finished word
            } else if word + 1 < words.len() {
                word += 1;
                acc.clear();
                owned = 0;
            } else {
                return Err(WordMapError::Reconstruction { position });
            }
        }
        acc.push_str(piece);
        owned += 1;
        word_of_token.push(word);
        if !targets[word].starts_with(normalize_word(&acc).as_str()) {
            return Err(WordMapError::Reconstruction { position });
        }
    }
    if word + 1 != words.len() || normalize_word(&acc) != targets[word] {
        return Err(WordMapError::Reconstruction { position: tokens.len() });
    }
    TokenMap::new(tokens.to_vec(), words.to_vec(), word_of_token)
}

/// One ASR word with its time span in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub word: String,
    pub start: f64,
    pub end: f64,
}

/// ASR word timestamps; serializes to the `words.json` schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WordTimestamps {
    pub words: Vec<TimedWord>,
}

impl WordTimestamps {
    pub fn new(words: Vec<TimedWord>) -> Self {
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Checks nonemptiness, `0 <= start < end`, and non-decreasing starts.
    pub fn validate(&self) -> Result<()> {
        if self.words.is_empty() {
            return Err(WordMapError::EmptyTimestamps);
        }
        let mut prev_start = f64::NEG_INFINITY;
        for (index, w) in self.words.iter().enumerate() {
            let bad = |reason: &str| WordMapError::InvalidTimestamp { index, reason: reason.to_string() };
            if !w.start.is_finite() || !w.end.is_finite() {
                return Err(bad("non-finite time"));
            }
            if w.start < 0.0 {
                return Err(bad("negative start"));
            }
            if w.end <= w.start {
                return Err(bad("end must be after start"));
            }
            if w.start < prev_start {
                return Err(bad("starts must be non-decreasing"));
            }
            prev_start = w.start;
        }
        Ok(())
    }
}

/// Monotonic pairing of ASR words with transcript words.
///
/// Longest common subsequence over normalized words. Returns
/// `(asr_index, transcript_index)` pairs in increasing order. Words that
/// normalize to the empty string never pair.
pub fn pair_words(asr_words: &[String], transcript_words: &[String]) -> Result<Vec<(usize, usize)>> {
    if asr_words.is_empty() || transcript_words.is_empty() {
        return Err(WordMapError::EmptyWords);
    }
    let a: Vec<String> = asr_words.iter().map(|w| normalize_word(w)).collect();
    let b: Vec<String> = transcript_words.iter().map(|w| normalize_word(w)).collect();
    let (n, m) = (a.len(), b.len());
    let matches = |i: usize, j: usize| !a[i].is_empty() && a[i] == b[j];

    // lcs[i][j] = LCS length of a[i..] and b[j..]
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if matches(i, j) {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }

    let mut pairs = Vec::with_capacity(lcs[0][0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if matches(i, j) && lcs[i][j] == lcs[i + 1][j + 1] + 1 {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }

    if (pairs.len() as f64) < MIN_PAIRING_COVERAGE * m as f64 {
        return Err(WordMapError::PairingCoverage { paired: pairs.len(), total: m });
    }
    Ok(pairs)
}

/// Ground-truth text index for every audio frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReferencePath {
    indices: Vec<usize>,
}

impl ReferencePath {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Time spans for every transcript word. Unpaired words borrow the span of
/// the nearest paired neighbour, preferring the earlier one on ties.
fn transcript_intervals(ts: &WordTimestamps, transcript_words: &[String]) -> Result<Vec<(f64, f64)>> {
    let asr: Vec<String> = ts.words.iter().map(|w| w.word.clone()).collect();
    let pairs = pair_words(&asr, transcript_words)?;
    let mut spans: Vec<Option<(f64, f64)>> = vec![None; transcript_words.len()];
    for (a, t) in pairs {
        spans[t] = Some((ts.words[a].start, ts.words[a].end));
    }
    let paired: Vec<usize> = (0..spans.len()).filter(|&i| spans[i].is_some()).collect();
    Ok((0..spans.len())
        .map(|i| {
            spans[i].unwrap_or_else(|| {
                let after = paired.partition_point(|&p| p < i);
                let prev = after.checked_sub(1).map(|k| paired[k]);
                let next = paired.get(after).copied();
                let nearest = match (prev, next) {
                    (Some(p), Some(n)) if n - i < i - p => n,
                    (Some(p), _) => p,
                    (None, Some(n)) => n,
                    (None, None) => unreachable!("pairing coverage guarantees a paired word"),
                };
                spans[nearest].expect("paired")
            })
        })
        .collect())
}

/// Word index for a frame centered at `center` seconds.
fn word_at(center: f64, spans: &[(f64, f64)]) -> usize {
    let containing = spans.iter().rposition(|&(s, e)| s <= center && center < e);
    if let Some(w) = containing {
        return w;
    }
    // gap or trailing silence: most recently finished word; leading silence: word 0
    spans.iter().rposition(|&(_, e)| e <= center).unwrap_or(0)
}

/// Builds the per-frame reference path from word timestamps.
///
/// Frame `i` is sampled at its center `(i + 0.5) * frame_duration_ms / 1000`
/// seconds. Leading silence maps to word 0, gaps and trailing silence to the
/// previous word, and the result is made monotonic by a running maximum. In
/// token mode each word index becomes that word's last token index. The first
/// frame is pinned to index 0 and the last to the final index.
pub fn timestamps_to_reference(
    ts: &WordTimestamps,
    num_frames: usize,
    frame_duration_ms: f64,
    target: &TokenMap,
    granularity: Granularity,
) -> Result<ReferencePath> {
    if ts.is_empty() {
        return Err(WordMapError::EmptyTimestamps);
    }
    if !(frame_duration_ms.is_finite() && frame_duration_ms > 0.0) {
        return Err(WordMapError::InvalidFrameDuration(frame_duration_ms));
    }
    let units = match granularity {
        Granularity::Word => target.num_words(),
        Granularity::Token => target.num_tokens(),
    };
    if num_frames == 0 || (num_frames == 1 && units > 1) {
        return Err(WordMapError::TooFewFrames { frames: num_frames, units });
    }

    let spans = transcript_intervals(ts, target.words())?;
    let mut running = 0usize;
    let mut indices: Vec<usize> = (0..num_frames)
        .map(|i| {
            let center = (i as f64 + 0.5) * frame_duration_ms / 1000.0;
            running = running.max(word_at(center, &spans));
            match granularity {
                Granularity::Word => running,
                Granularity::Token => target.last_token_of(running),
            }
        })
        .collect();
    indices[0] = 0;
    indices[num_frames - 1] = units - 1;
    Ok(ReferencePath { indices })
}

/// `tokens.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokensFile {
    pub tokens: Vec<String>,
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_of_token: Option<Vec<usize>>,
}

impl TokensFile {
    /// Uses the stored grouping when present, otherwise reconstructs it.
    pub fn into_token_map(self) -> Result<TokenMap> {
        match self.word_of_token {
            Some(groups) => TokenMap::new(self.tokens, self.words, groups),
            None => group_tokens(&self.tokens, &self.words),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn ts(entries: &[(&str, f64, f64)]) -> WordTimestamps {
        WordTimestamps::new(
            entries.iter().map(|&(w, s, e)| TimedWord { word: w.into(), start: s, end: e }).collect(),
        )
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_word("Hello,"), "hello");
        assert_eq!(normalize_word("don't"), "don't");
        assert_eq!(normalize_word("\u{2014}"), "");
        assert_eq!(normalize_word("\"Quoted!\""), "quoted");
        // decomposed e + combining acute composes to a single code point
        assert_eq!(normalize_word("Cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn group_subwords() {
        let map = group_tokens(&strings(&["hel", "lo", "world"]), &strings(&["hello", "world"])).unwrap();
        assert_eq!(map.word_of_token(), &[0, 0, 1]);
    }

    #[test]
    fn group_word_level_is_identity() {
        let map = group_tokens(&strings(&["hello", "world"]), &strings(&["hello", "world"])).unwrap();
        assert_eq!(map.word_of_token(), &[0, 1]);
        assert!(map.is_identity());
    }

    #[test]
    fn group_reports_first_mismatch() {
        let err = group_tokens(&strings(&["he", "xx"]), &strings(&["hello"])).unwrap_err();
        assert_eq!(err, WordMapError::Reconstruction { position: 1 });
    }

    #[test]
    fn group_runs_out_of_tokens() {
        let err = group_tokens(&strings(&["hello"]), &strings(&["hello", "world"])).unwrap_err();
        assert_eq!(err, WordMapError::Reconstruction { position: 1 });
    }

    #[test]
    fn group_handles_markers_and_punctuation() {
        let tokens = strings(&["\u{2581}Hel", "lo", ",", "\u{2581}wor", "ld", "."]);
        let map = group_tokens(&tokens, &strings(&["Hello,", "world."])).unwrap();
        assert_eq!(map.word_of_token(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(map.token_span(1), 3..6);
        assert_eq!(map.last_token_of(0), 2);
    }

    #[test]
    fn group_apostrophe_split() {
        let map = group_tokens(&strings(&["don", "'", "t", "go"]), &strings(&["don't", "go"])).unwrap();
        assert_eq!(map.word_of_token(), &[0, 0, 0, 1]);
    }

    #[test]
    fn token_map_rejects_bad_groupings() {
        let t = strings(&["a", "b"]);
        let w = strings(&["a", "b"]);
        assert!(TokenMap::new(t.clone(), w.clone(), vec![1, 1]).is_err());
        assert!(TokenMap::new(t.clone(), w.clone(), vec![0, 0]).is_err());
        assert!(TokenMap::new(t.clone(), strings(&["a", "x"]), vec![0, 1]).is_err());
        assert!(TokenMap::new(t, w, vec![0]).is_err());
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair_words(&strings(&["hello", "world"]), &strings(&["hello", "world"])).unwrap(), vec![(0, 0), (1, 1)]);
        assert_eq!(
            pair_words(&strings(&["uh", "hello", "world"]), &strings(&["hello", "world"])).unwrap(),
            vec![(1, 0), (2, 1)]
        );
        assert_eq!(
            pair_words(&strings(&["a", "b"]), &strings(&["x", "y", "z"])).unwrap_err(),
            WordMapError::PairingCoverage { paired: 0, total: 3 }
        );
    }

    #[test]
    fn pairing_normalizes_case_and_punctuation() {
        let pairs = pair_words(&strings(&["Hello,", "World!"]), &strings(&["hello", "world"])).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn pairing_coverage_floor_is_inclusive() {
        // 4 of 5 paired is exactly 80%
        let asr = strings(&["a", "b", "c", "d"]);
        let transcript = strings(&["a", "b", "x", "c", "d"]);
        assert_eq!(pair_words(&asr, &transcript).unwrap().len(), 4);
        let transcript = strings(&["a", "b", "x", "y", "c", "d"]);
        assert!(pair_words(&asr, &transcript).is_err());
    }

    #[test]
    fn reference_two_words_four_frames() {
        let map = TokenMap::identity(strings(&["a", "b"])).unwrap();
        let path = timestamps_to_reference(&ts(&[("a", 0.0, 1.0), ("b", 1.0, 2.0)]), 4, 500.0, &map, Granularity::Word)
            .unwrap();
        assert_eq!(path.indices(), &[0, 0, 1, 1]);
    }

    #[test]
    fn reference_trailing_silence() {
        let map = TokenMap::identity(strings(&["a", "b"])).unwrap();
        let path = timestamps_to_reference(&ts(&[("a", 0.0, 1.0), ("b", 1.0, 2.0)]), 6, 500.0, &map, Granularity::Word)
            .unwrap();
        assert_eq!(path.indices(), &[0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn reference_single_word_330ms() {
        let map = TokenMap::identity(strings(&["x"])).unwrap();
        let path = timestamps_to_reference(&ts(&[("x", 0.0, 1.0)]), 3, 330.0, &map, Granularity::Word).unwrap();
        assert_eq!(path.indices(), &[0, 0, 0]);
    }

    #[test]
    fn reference_gap_and_leading_silence() {
        let map = TokenMap::identity(strings(&["a", "b"])).unwrap();
        // centers: 0.05 .. 0.95 in 0.1 steps
        let path =
            timestamps_to_reference(&ts(&[("a", 0.2, 0.4), ("b", 0.6, 0.8)]), 10, 100.0, &map, Granularity::Word)
                .unwrap();
        assert_eq!(path.indices(), &[0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn reference_token_mode_uses_last_token() {
        let map = group_tokens(&strings(&["a", "b", "c", "d"]), &strings(&["ab", "cd"])).unwrap();
        let path = timestamps_to_reference(
            &ts(&[("ab", 0.0, 1.0), ("cd", 1.0, 2.0)]),
            4,
            500.0,
            &map,
            Granularity::Token,
        )
        .unwrap();
        // first frame pinned to 0, then word 0 -> token 1, word 1 -> token 3
        assert_eq!(path.indices(), &[0, 1, 3, 3]);
    }

    #[test]
    fn reference_unpaired_word_inherits_neighbour() {
        let map = TokenMap::identity(strings(&["a", "b", "c", "d", "e"])).unwrap();
        let stamps = ts(&[("a", 0.0, 1.0), ("b", 1.0, 2.0), ("c", 2.0, 3.0), ("e", 3.0, 4.0)]);
        let path = timestamps_to_reference(&stamps, 8, 500.0, &map, Granularity::Word).unwrap();
        // "d" borrows "c"'s span; the later of two words covering a frame wins
        assert_eq!(path.indices(), &[0, 0, 1, 1, 3, 3, 4, 4]);
    }

    #[test]
    fn reference_errors() {
        let map = TokenMap::identity(strings(&["a", "b"])).unwrap();
        let good = ts(&[("a", 0.0, 1.0), ("b", 1.0, 2.0)]);
        assert_eq!(
            timestamps_to_reference(&WordTimestamps::default(), 4, 500.0, &map, Granularity::Word).unwrap_err(),
            WordMapError::EmptyTimestamps
        );
        assert!(matches!(
            timestamps_to_reference(&good, 4, 0.0, &map, Granularity::Word),
            Err(WordMapError::InvalidFrameDuration(_))
        ));
        assert!(matches!(
            timestamps_to_reference(&good, 1, 500.0, &map, Granularity::Word),
            Err(WordMapError::TooFewFrames { .. })
        ));
        assert!(matches!(
            timestamps_to_reference(&ts(&[("p", 0.0, 1.0), ("q", 1.0, 2.0)]), 4, 500.0, &map, Granularity::Word),
            Err(WordMapError::PairingCoverage { .. })
        ));
    }

    #[test]
    fn timestamp_validation() {
        assert!(ts(&[("a", 0.0, 1.0), ("b", 0.5, 2.0)]).validate().is_ok());
        assert!(ts(&[("a", 1.0, 1.0)]).validate().is_err());
        assert!(ts(&[("a", -0.1, 1.0)]).validate().is_err());
        assert!(ts(&[("a", 1.0, 2.0), ("b", 0.5, 3.0)]).validate().is_err());
        assert!(WordTimestamps::default().validate().is_err());
    }

    #[test]
    fn tokens_file_recomputes_grouping() {
        let file: TokensFile = serde_json::from_str(r#"{"tokens":["hel","lo"],"words":["hello"]}"#).unwrap();
        assert_eq!(file.into_token_map().unwrap().word_of_token(), &[0, 0]);
    }
}
