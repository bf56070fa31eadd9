//! Monotonic alignment search.
//!
//! A path assigns one text row to every audio column, starts at row 0, ends
//! at row `T - 1`, and advances by 0 or 1 row per column. [`mas`] finds the
//! path with the largest summed similarity by dynamic programming;
//! [`brute_force_mas`] enumerates every path and serves as its oracle.

use serde::Serialize;
use thiserror::Error;

use crate::simkernel::SimilarityMatrix;

/// Largest number of paths [`brute_force_mas`] will enumerate.
pub const BRUTE_FORCE_BUDGET: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasError {
    #[error("{frames} audio frame(s) cannot cover {rows} text position(s)")]
    Infeasible { rows: usize, frames: usize },
    #[error("empty similarity matrix")]
    Empty,
    #[error("{paths} candidate paths exceed the enumeration budget")]
    BudgetExceeded { paths: u128 },
    #[error("path lengths differ: {predicted} vs {reference}")]
    LengthMismatch { predicted: usize, reference: usize },
}

pub type Result<T> = std::result::Result<T, MasError>;

/// Text index per audio frame plus the summed similarity along it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentPath {
    pub indices: Vec<usize>,
    pub score: f64,
}

impl AlignmentPath {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// True when the path is a legal alignment over `rows` text positions.
    pub fn is_valid(&self, rows: usize) -> bool {
        self.indices.first() == Some(&0)
            && self.indices.last() == Some(&(rows.saturating_sub(1)))
            && self.indices.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
    }
}

fn check_shape(s: &SimilarityMatrix) -> Result<(usize, usize)> {
    let (rows, cols) = (s.rows(), s.cols());
    if rows == 0 || cols == 0 {
        return Err(MasError::Empty);
    }
    if cols < rows {
        return Err(MasError::Infeasible { rows, frames: cols });
    }
    Ok((rows, cols))
}

fn path_score(s: &SimilarityMatrix, indices: &[usize]) -> f64 {
    indices.iter().enumerate().fold(0.0, |acc, (i, &j)| acc + f64::from(s.get(j, i)))
}

/// Best monotonic path through `s` (rows = text, columns = audio).
///
/// `Q[j,i] = S[j,i] + max(Q[j,i-1], Q[j-1,i-1])`, unreachable cells are
/// `-inf`. Backtracking starts at `(T-1, A-1)` and keeps the row on ties.
pub fn mas(s: &SimilarityMatrix) -> Result<AlignmentPath> {
    let (rows, cols) = check_shape(s)?;
    let mut q = vec![f64::NEG_INFINITY; rows * cols];
    let at = |j: usize, i: usize| j * cols + i;

    q[at(0, 0)] = f64::from(s.get(0, 0));
    for i in 1..cols {
        // rows above i are unreachable by column i; rows below T-A+i cannot reach the end
        let lo = (rows + i).saturating_sub(cols);
        let hi = i.min(rows - 1);
        for j in lo..=hi {
            let stay = q[at(j, i - 1)];
            let advance = if j > 0 { q[at(j - 1, i - 1)] } else { f64::NEG_INFINITY };
            q[at(j, i)] = f64::from(s.get(j, i)) + stay.max(advance);
        }
    }

    let mut indices = vec![0usize; cols];
    let mut j = rows - 1;
    for i in (1..cols).rev() {
        indices[i] = j;
        if j > 0 && q[at(j - 1, i - 1)] > q[at(j, i - 1)] {
            j -= 1;
        }
    }
    indices[0] = j;
    debug_assert_eq!(j, 0);

    let score = path_score(s, &indices);
    Ok(AlignmentPath { indices, score })
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Later columns decide first; at the latest differing column the larger
/// row wins. This reproduces the stay-preferring backtrack of [`mas`].
fn preferred_on_tie(candidate: &[usize], best: &[usize]) -> bool {
    for (c, b) in candidate.iter().rev().zip(best.iter().rev()) {
        if c != b {
            return c > b;
        }
    }
    false
}

/// Exhaustive search over all `C(A-1, T-1)` monotonic paths.
pub fn brute_force_mas(s: &SimilarityMatrix) -> Result<AlignmentPath> {
    let (rows, cols) = check_shape(s)?;
    let paths = binomial((cols - 1) as u128, (rows - 1) as u128);
    if paths > BRUTE_FORCE_BUDGET {
        return Err(MasError::BudgetExceeded { paths });
    }

    // each path is the set of columns (1..A) at which the row advances
    let mut steps: Vec<usize> = (1..rows).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut indices = Vec::with_capacity(cols);
        let mut row = 0;
        let mut next = steps.iter().peekable();
        for i in 0..cols {
            if next.peek() == Some(&&i) {
                row += 1;
                next.next();
            }
            indices.push(row);
        }
        let mut score = 0.0f64;
        for (i, &j) in indices.iter().enumerate() {
            score += f64::from(s.get(j, i));
        }
        let better = match &best {
            None => true,
            Some((b, bi)) => score > *b || (score == *b && preferred_on_tie(&indices, bi)),
        };
        if better {
            best = Some((score, indices));
        }

        // next combination of rows-1 advance columns out of 1..cols
        let k = steps.len();
        let mut pos = k;
        while pos > 0 && steps[pos - 1] == cols - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        steps[pos - 1] += 1;
        for t in pos..k {
            steps[t] = steps[t - 1] + 1;
        }
    }
    let (score, indices) = best.expect("at least one path");
    Ok(AlignmentPath { indices, score })
}

/// Mean absolute index deviation between a predicted and a reference path.
pub fn path_distance(predicted: &[usize], reference: &[usize]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(MasError::LengthMismatch { predicted: predicted.len(), reference: reference.len() });
    }
    if predicted.is_empty() {
        return Err(MasError::Empty);
    }
    let total: u64 = predicted.iter().zip(reference).map(|(&p, &r)| p.abs_diff(r) as u64).sum();
    Ok(total as f64 / predicted.len() as f64)
}
