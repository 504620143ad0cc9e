//! Frame-major CTC log-probability matrices.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("vocabulary size {0} is below the minimum of 2 (one token plus blank)")]
    VocabTooSmall(usize),
    #[error("expected {expected} values for {frames}x{vocab}, got {actual}")]
    ShapeMismatch {
        frames: usize,
        vocab: usize,
        expected: usize,
        actual: usize,
    },
    #[error("row {row} is not normalized: log-sum-exp = {lse}")]
    Unnormalized { row: usize, lse: f64 },
    #[error("cannot join matrices with vocabulary sizes {0} and {1}")]
    VocabMismatch(usize, usize),
}

/// A `frames × vocab` matrix of natural-log probabilities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    frames: usize,
    vocab: usize,
    values: Vec<f32>,
}

impl LogProbMatrix {
    pub fn new(frames: usize, vocab: usize, values: Vec<f32>) -> Result<Self, MatrixError> {
        if vocab < 2 {
            return Err(MatrixError::VocabTooSmall(vocab));
        }
        let expected = frames * vocab;
        if values.len() != expected {
            return Err(MatrixError::ShapeMismatch {
                frames,
                vocab,
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            frames,
            vocab,
            values,
        })
    }

    pub fn empty(vocab: usize) -> Result<Self, MatrixError> {
        Self::new(0, vocab, Vec::new())
    }

    /// Builds a matrix from rows of probabilities (not logs). Handy in tests.
    pub fn from_prob_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let vocab = rows.first().map_or(2, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * vocab);
        for row in rows {
            if row.len() != vocab {
                return Err(MatrixError::ShapeMismatch {
                    frames: rows.len(),
                    vocab,
                    expected: rows.len() * vocab,
                    actual: values.len() + row.len(),
                });
            }
            values.extend(row.iter().map(|p| p.ln() as f32));
        }
        Self::new(rows.len(), vocab, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.vocab..(frame + 1) * self.vocab]
    }

    #[inline]
    pub fn get(&self, frame: usize, token: usize) -> f32 {
        self.values[frame * self.vocab + token]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.vocab)
    }

    /// Copy of frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.frames);
        let start = start.min(end);
        Self {
            frames: end - start,
            vocab: self.vocab,
            values: self.values[start * self.vocab..end * self.vocab].to_vec(),
        }
    }

    /// Splits into consecutive chunks of the given frame counts; a trailing
    /// remainder becomes one extra chunk.
    pub fn split_at_sizes(&self, sizes: &[usize]) -> Vec<Self> {
        let mut out = Vec::with_capacity(sizes.len() + 1);
        let mut at = 0;
        for &n in sizes {
            let end = (at + n).min(self.frames);
            out.push(self.slice(at, end));
            at = end;
        }
        if at < self.frames {
            out.push(self.slice(at, self.frames));
        }
        out
    }

    pub fn concat(parts: &[Self]) -> Result<Self, MatrixError> {
        let vocab = parts.first().map_or(2, |p| p.vocab);
        let mut values = Vec::new();
        let mut frames = 0;
        for p in parts {
            if p.vocab != vocab {
                return Err(MatrixError::VocabMismatch(vocab, p.vocab));
            }
            values.extend_from_slice(&p.values);
            frames += p.frames;
        }
        Self::new(frames, vocab, values)
    }

    /// Checks that every row exponentiates to a distribution within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<(), MatrixError> {
        for (row, values) in self.rows().enumerate() {
            let lse = log_sum_exp(values);
            if !(lse.abs() <= tol) {
                return Err(MatrixError::Unnormalized { row, lse });
            }
        }
        Ok(())
    }
}

pub fn log_sum_exp(values: &[f32]) -> f64 {
    let max = values
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max) as f64;
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v as f64 - max).exp()).sum();
    max + sum.ln()
}
