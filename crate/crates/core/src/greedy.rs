//! Greedy CTC decoding with word-level frame alignment.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TokenId;
use crate::logprobs::LogProbMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignError {
    #[error("log-probability matrix has vocabulary {matrix}, token list has {vocab}")]
    DimensionMismatch { matrix: usize, vocab: usize },
}

/// A decoder word with its inclusive frame interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub word: String,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Sum of the chosen symbols' log-probabilities over the interval.
    pub path_score: f64,
}

/// How token strings mark the beginning of a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordBoundary {
    pub marker: String,
}

impl Default for WordBoundary {
    fn default() -> Self {
        Self {
            marker: "\u{2581}".to_string(),
        }
    }
}

impl WordBoundary {
    /// Splits a token into (starts a word, text without the marker).
    /// A leading plain space also counts as a word start.
    pub fn split<'a>(&self, piece: &'a str) -> (bool, &'a str) {
        if !self.marker.is_empty() {
            if let Some(rest) = piece.strip_prefix(self.marker.as_str()) {
                return (true, rest);
            }
        }
        match piece.strip_prefix(' ') {
            Some(rest) => (true, rest),
            None => (false, piece),
        }
    }
}

#[inline]
fn argmax(row: &[f32]) -> (usize, f32) {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

fn check_vocab(logprobs: &LogProbMatrix, vocab: &[String]) -> Result<(), AlignError> {
    if logprobs.vocab() != vocab.len() {
        return Err(AlignError::DimensionMismatch {
            matrix: logprobs.vocab(),
            vocab: vocab.len(),
        });
    }
    Ok(())
}

/// Frame-wise argmax, CTC collapse, then grouping of tokens into words.
///
/// A word spans its first to last non-blank contributing frame (repeats of
/// its tokens included); `path_score` sums the argmax log-probabilities over
/// that span. Words whose text is empty are dropped.
pub fn greedy_decode(
    logprobs: &LogProbMatrix,
    vocab: &[String],
    blank_id: TokenId,
    boundary: &WordBoundary,
) -> Result<Vec<WordAlignment>, AlignError> {
    check_vocab(logprobs, vocab)?;
    let best: Vec<(usize, f32)> = logprobs.rows().map(argmax).collect();
    let blank = blank_id.index();

    // (text, start, end) before scoring
    let mut spans: Vec<(String, usize, usize)> = Vec::new();
    let mut prev = blank;
    for (t, &(sym, _)) in best.iter().enumerate() {
        if sym == blank {
            prev = sym;
            continue;
        }
        if sym == prev {
            if let Some(last) = spans.last_mut() {
                last.2 = t;
            }
            continue;
        }
        prev = sym;
        let (starts, text) = boundary.split(&vocab[sym]);
        match spans.last_mut() {
            Some(last) if !starts => {
                last.0.push_str(text);
                last.2 = t;
            }
            _ => spans.push((text.to_string(), t, t)),
        }
    }

    Ok(spans
        .into_iter()
        .filter(|(text, _, _)| !text.is_empty())
        .map(|(word, start, end)| {
            let path_score = best[start..=end]
                .iter()
                .fold(0.0f64, |acc, &(_, lp)| acc + lp as f64);
            WordAlignment {
                word,
                start_frame: start,
                end_frame: end,
                path_score,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
struct OpenWord {
    text: String,
    start: usize,
    end: usize,
    // running argmax sum from `start` through the latest frame
    acc: f64,
    score_at_end: f64,
}

impl OpenWord {
    fn close(self) -> Option<WordAlignment> {
        (!self.text.is_empty()).then_some(WordAlignment {
            word: self.text,
            start_frame: self.start,
            end_frame: self.end,
            path_score: self.score_at_end,
        })
    }
}

/// Streaming form of [`greedy_decode`].
///
/// Carries the previous argmax symbol and the open word across chunk
/// boundaries; a word is released once the next word starts (or at
/// [`finish`](Self::finish)).
#[derive(Debug, Clone)]
pub struct StreamingAligner {
    vocab: Arc<[String]>,
    blank: usize,
    boundary: WordBoundary,
    prev: usize,
    open: Option<OpenWord>,
    frames_seen: usize,
}

impl StreamingAligner {
    pub fn new(vocab: Arc<[String]>, blank_id: TokenId, boundary: WordBoundary) -> Self {
        Self {
            vocab,
            blank: blank_id.index(),
            boundary,
            prev: blank_id.index(),
            open: None,
            frames_seen: 0,
        }
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Start frame of the word still being built, if any.
    pub fn open_start(&self) -> Option<usize> {
        self.open.as_ref().map(|w| w.start)
    }

    /// Current uncommitted word text, for display.
    pub fn open_text(&self) -> Option<&str> {
        self.open.as_ref().map(|w| w.text.as_str())
    }

    pub fn push_chunk(&mut self, chunk: &LogProbMatrix) -> Result<Vec<WordAlignment>, AlignError> {
        if chunk.is_empty() {
            return Ok(Vec::new());
        }
        check_vocab(chunk, &self.vocab)?;
        let mut closed = Vec::new();
        for (i, row) in chunk.rows().enumerate() {
            let t = self.frames_seen + i;
            let (sym, lp) = argmax(row);
            if let Some(open) = self.open.as_mut() {
                open.acc += lp as f64;
            }
            if sym == self.blank {
                self.prev = sym;
                continue;
            }
            if sym == self.prev {
                if let Some(open) = self.open.as_mut() {
                    open.end = t;
                    open.score_at_end = open.acc;
                }
                continue;
            }
            self.prev = sym;
            let (starts, text) = self.boundary.split(&self.vocab[sym]);
            match self.open.as_mut() {
                Some(open) if !starts => {
                    open.text.push_str(text);
                    open.end = t;
                    open.score_at_end = open.acc;
                }
                _ => {
                    if let Some(word) = self.open.take().and_then(OpenWord::close) {
                        closed.push(word);
                    }
                    let acc = 0.0 + lp as f64;
                    self.open = Some(OpenWord {
                        text: text.to_string(),
                        start: t,
                        end: t,
                        acc,
                        score_at_end: acc,
                    });
                }
            }
        }
        self.frames_seen += chunk.frames();
        Ok(closed)
    }

    /// Closes the open word at end of utterance.
    pub fn finish(&mut self) -> Vec<WordAlignment> {
        self.prev = self.blank;
        self.open.take().and_then(OpenWord::close).into_iter().collect()
    }
}
