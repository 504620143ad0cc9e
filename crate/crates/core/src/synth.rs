//! Synthetic CTC posteriors with known ground truth, and exhaustive scoring
//! oracles used to check the spotter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TokenId;
use crate::logprobs::LogProbMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("enumeration bound exceeded: T={frames} (max {max_frames}), V={vocab} (max {max_vocab})")]
    EnumerationTooLarge {
        frames: usize,
        vocab: usize,
        max_frames: usize,
        max_vocab: usize,
    },
}

/// One scripted segment: `token` dominates `frames` consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptItem {
    pub token: u32,
    pub frames: usize,
    pub peak: f64,
    /// Optional competitor sharing the frame: (token, probability).
    #[serde(default)]
    pub runner_up: Option<(u32, f64)>,
}

impl ScriptItem {
    pub fn new(token: u32, frames: usize, peak: f64) -> Self {
        Self {
            token,
            frames,
            peak,
            runner_up: None,
        }
    }

    pub fn with_runner_up(mut self, token: u32, prob: f64) -> Self {
        self.runner_up = Some((token, prob));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub vocab_size: usize,
    pub blank_id: u32,
    pub script: Vec<ScriptItem>,
    /// Spread of the leftover mass: 0 is uniform, larger is peakier noise.
    pub noise_temperature: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.blank_id as usize >= self.vocab_size {
            return bad(format!("blank id {} out of range", self.blank_id));
        }
        if !(self.noise_temperature >= 0.0 && self.noise_temperature.is_finite()) {
            return bad(format!("noise temperature {}", self.noise_temperature));
        }
        for (i, item) in self.script.iter().enumerate() {
            if item.token as usize >= self.vocab_size {
                return bad(format!("item {i}: token {} out of range", item.token));
            }
            if item.frames == 0 {
                return bad(format!("item {i}: duration must be >= 1 frame"));
            }
            if !(item.peak > 0.0 && item.peak < 1.0) {
                return bad(format!("item {i}: peak {} not in (0, 1)", item.peak));
            }
            if let Some((tok, p)) = item.runner_up {
                if tok as usize >= self.vocab_size || tok == item.token {
                    return bad(format!("item {i}: bad runner-up token {tok}"));
                }
                if !(p > 0.0 && item.peak + p < 1.0) {
                    return bad(format!("item {i}: runner-up probability {p}"));
                }
            }
        }
        Ok(())
    }
}

/// A scripted token and the frames it occupies (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScriptedSpan {
    pub token: TokenId,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub matrix: LogProbMatrix,
    pub alignment: Vec<ScriptedSpan>,
}

pub fn generate(spec: &SynthSpec) -> Result<Synthesized, SynthError> {
    spec.validate()?;
    let v = spec.vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total: usize = spec.script.iter().map(|s| s.frames).sum();
    let mut values = Vec::with_capacity(total * v);
    let mut alignment = Vec::with_capacity(spec.script.len());
    let mut frame = 0;
    let mut weights = vec![0.0f64; v];
    for item in &spec.script {
        for _ in 0..item.frames {
            let (runner, runner_p) = item.runner_up.unwrap_or((item.token, 0.0));
            let rest = 1.0 - item.peak - runner_p;
            let mut norm = 0.0;
            for (i, w) in weights.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *w = if i as u32 == item.token || (runner_p > 0.0 && i as u32 == runner) {
                    0.0
                } else {
                    (spec.noise_temperature * z).exp()
                };
                norm += *w;
            }
            for (i, w) in weights.iter().enumerate() {
                let p = if i as u32 == item.token {
                    item.peak
                } else if runner_p > 0.0 && i as u32 == runner {
                    runner_p
                } else if norm > 0.0 {
                    rest * w / norm
                } else {
                    0.0
                };
                values.push(p.max(f64::MIN_POSITIVE).ln() as f32);
            }
        }
        alignment.push(ScriptedSpan {
            token: TokenId(item.token),
            start_frame: frame,
            end_frame: frame + item.frames - 1,
        });
        frame += item.frames;
    }
    let matrix = LogProbMatrix::new(total, v, values).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(Synthesized { matrix, alignment })
}

/// Random normalized log-probabilities: softmax of `sharpness × N(0,1)` logits.
pub fn random_matrix(seed: u64, frames: usize, vocab: usize, sharpness: f64) -> LogProbMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_matrix_with(&mut rng, frames, vocab, sharpness)
}

pub fn random_matrix_with<R: Rng>(rng: &mut R, frames: usize, vocab: usize, sharpness: f64) -> LogProbMatrix {
    let mut values = Vec::with_capacity(frames * vocab);
    let mut logits = vec![0.0f64; vocab];
    for _ in 0..frames {
        for l in logits.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *l = sharpness * z;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        values.extend(logits.iter().map(|l| (l - lse) as f32));
    }
    LogProbMatrix::new(frames, vocab, values).expect("shape is consistent")
}

pub const ORACLE_MAX_FRAMES: usize = 12;
pub const ORACLE_MAX_VOCAB: usize = 5;

/// Best alignment of one keyword found by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleHit {
    pub score: f64,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Full enumeration result for one keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleScan {
    /// Best hit per end frame.
    pub by_end: Vec<Option<OracleHit>>,
    /// Number of label sequences enumerated, keyed by interval length.
    pub sequences_by_length: Vec<u64>,
}

impl OracleScan {
    pub fn best(&self) -> Option<OracleHit> {
        self.by_end
            .iter()
            .flatten()
            .copied()
            .fold(None, |best: Option<OracleHit>, h| match best {
                Some(b) if b.score >= h.score => Some(b),
                _ => Some(h),
            })
    }
}

fn collapses_to(labels: &[usize], keyword: &[usize], blank: usize) -> bool {
    let mut k = 0;
    let mut prev = blank;
    for &l in labels {
        if l != blank && l != prev {
            if k == keyword.len() || keyword[k] != l {
                return false;
            }
            k += 1;
        }
        prev = l;
    }
    k == keyword.len()
}

/// Enumerates, for every interval `[s, e]`, all `V^(e-s+1)` label sequences
/// whose CTC collapse equals `keyword` and whose first and last labels are
/// keyword tokens, scoring each as the frame-wise log-probability sum plus
/// `cb_weight` per keyword token.
pub fn brute_force_scan(
    logprobs: &LogProbMatrix,
    keyword: &[TokenId],
    cb_weight: f64,
    blank_id: TokenId,
) -> Result<OracleScan, SynthError> {
    let (t_len, v) = (logprobs.frames(), logprobs.vocab());
    if t_len > ORACLE_MAX_FRAMES || v > ORACLE_MAX_VOCAB {
        return Err(SynthError::EnumerationTooLarge {
            frames: t_len,
            vocab: v,
            max_frames: ORACLE_MAX_FRAMES,
            max_vocab: ORACLE_MAX_VOCAB,
        });
    }
    let blank = blank_id.index();
    let kw: Vec<usize> = keyword.iter().map(|t| t.index()).collect();
    let bonus = cb_weight * kw.len() as f64;
    let mut by_end: Vec<Option<OracleHit>> = vec![None; t_len];
    let mut sequences_by_length = vec![0u64; t_len + 1];
    let mut labels = Vec::with_capacity(t_len);
    for len in 1..=t_len {
        for start in 0..=t_len - len {
            let end = start + len - 1;
            labels.clear();
            labels.resize(len, 0);
            loop {
                sequences_by_length[len] += 1;
                if labels[0] != blank && labels[len - 1] != blank && collapses_to(&labels, &kw, blank) {
                    let acoustic = labels
                        .iter()
                        .enumerate()
                        .fold(0.0f64, |acc, (i, &l)| acc + logprobs.get(start + i, l) as f64);
                    let score = acoustic + bonus;
                    let slot = &mut by_end[end];
                    let better = match slot {
                        None => true,
                        Some(h) => score > h.score || (score == h.score && start < h.start_frame),
                    };
                    if better {
                        *slot = Some(OracleHit {
                            score,
                            start_frame: start,
                            end_frame: end,
                        });
                    }
                }
                // odometer increment
                let mut i = 0;
                while i < len {
                    labels[i] += 1;
                    if labels[i] < v {
                        break;
                    }
                    labels[i] = 0;
                    i += 1;
                }
                if i == len {
                    break;
                }
            }
        }
    }
    Ok(OracleScan {
        by_end,
        sequences_by_length,
    })
}

/// Best `(score, start, end)` over all intervals; `None` when no alignment
/// exists (e.g. the keyword needs more frames than the matrix has).
pub fn brute_force_keyword_score(
    logprobs: &LogProbMatrix,
    keyword: &[TokenId],
    cb_weight: f64,
    blank_id: TokenId,
) -> Result<Option<OracleHit>, SynthError> {
    Ok(brute_force_scan(logprobs, keyword, cb_weight, blank_id)?.best())
}

/// Reference CTC collapse: drop repeats, then blanks.
pub fn ctc_collapse(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut prev = None;
    for &l in labels {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}
