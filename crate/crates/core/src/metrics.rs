//! WER, bias-phrase precision/recall/F-score and per-chunk runtime accounting.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::pipeline::ChunkTimings;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("{refs} reference utterances but {hyps} hypotheses")]
    CountMismatch { refs: usize, hyps: usize },
    #[error("runtime report needs at least one sample")]
    NoSamples,
    #[error("chunk duration must be positive")]
    BadChunkDuration,
}

/// Lowercases and strips punctuation other than apostrophes.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word-level Levenshtein distance.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Word error rate in percent: edits / max(1, |ref|) × 100.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> f64 {
    100.0 * edit_distance(reference, hypothesis) as f64 / reference.len().max(1) as f64
}

/// Corpus WER: total edits over total reference words.
pub fn corpus_wer(refs: &[Vec<String>], hyps: &[Vec<String>]) -> Result<f64, EvalError> {
    if refs.len() != hyps.len() {
        return Err(EvalError::CountMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    let edits: usize = refs.iter().zip(hyps).map(|(r, h)| edit_distance(r, h)).sum();
    let words: usize = refs.iter().map(Vec::len).sum();
    Ok(100.0 * edits as f64 / words.max(1) as f64)
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub hits: usize,
    pub false_alarms: usize,
    pub misses: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        percent(self.hits, self.hits + self.false_alarms)
    }

    pub fn recall(&self) -> f64 {
        percent(self.hits, self.hits + self.misses)
    }

    pub fn fscore(&self) -> f64 {
        fscore(self.precision(), self.recall())
    }

    fn add(&mut self, other: Counts) {
        self.hits += other.hits;
        self.false_alarms += other.false_alarms;
        self.misses += other.misses;
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhraseCounts {
    pub phrase: String,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordReport {
    pub totals: Counts,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub per_keyword: Vec<PhraseCounts>,
}

impl KeywordReport {
    pub fn from_counts(totals: Counts, per_keyword: Vec<PhraseCounts>) -> Self {
        Self {
            precision: totals.precision(),
            recall: totals.recall(),
            fscore: totals.fscore(),
            totals,
            per_keyword,
        }
    }
}

/// Counts non-overlapping occurrences of each phrase, longest phrase first.
fn count_phrases(words: &[String], phrases: &[Vec<String>], order: &[usize]) -> Vec<usize> {
    let mut used = vec![false; words.len()];
    let mut counts = vec![0; phrases.len()];
    for &pi in order {
        let phrase = &phrases[pi];
        let n = phrase.len();
        if n == 0 || n > words.len() {
            continue;
        }
        let mut i = 0;
        while i + n <= words.len() {
            if words[i..i + n] == phrase[..] && !used[i..i + n].iter().any(|&u| u) {
                used[i..i + n].iter_mut().for_each(|u| *u = true);
                counts[pi] += 1;
                i += n;
            } else {
                i += 1;
            }
        }
    }
    counts
}

/// Bias-phrase precision/recall/F-score over aligned utterance pairs.
///
/// Per utterance and phrase: hits = min(ref count, hyp count); surplus
/// hypothesis occurrences are false alarms, surplus reference occurrences
/// are misses.
pub fn keyword_prf<S: AsRef<str>>(
    refs: &[S],
    hyps: &[S],
    phrases: &[S],
) -> Result<KeywordReport, EvalError> {
    if refs.len() != hyps.len() {
        return Err(EvalError::CountMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    // dedup normalized phrases, keeping first spelling
    let mut seen = HashMap::new();
    let mut norm: Vec<Vec<String>> = Vec::new();
    let mut names = Vec::new();
    for p in phrases {
        let words = normalize_words(p.as_ref());
        if words.is_empty() || seen.contains_key(&words) {
            continue;
        }
        seen.insert(words.clone(), norm.len());
        names.push(words.join(" "));
        norm.push(words);
    }
    let mut order: Vec<usize> = (0..norm.len()).collect();
    order.sort_by(|&a, &b| norm[b].len().cmp(&norm[a].len()).then(norm[a].cmp(&norm[b])));

    let mut per = vec![Counts::default(); norm.len()];
    for (r, h) in refs.iter().zip(hyps) {
        let rc = count_phrases(&normalize_words(r.as_ref()), &norm, &order);
        let hc = count_phrases(&normalize_words(h.as_ref()), &norm, &order);
        for (i, c) in per.iter_mut().enumerate() {
            let hits = rc[i].min(hc[i]);
            c.add(Counts {
                hits,
                false_alarms: hc[i] - hits,
                misses: rc[i] - hits,
            });
        }
    }
    let mut totals = Counts::default();
    per.iter().for_each(|c| totals.add(*c));
    let per_keyword = names
        .into_iter()
        .zip(per)
        .map(|(phrase, counts)| PhraseCounts { phrase, counts })
        .collect();
    Ok(KeywordReport::from_counts(totals, per_keyword))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MeanP95 {
    pub mean: f64,
    pub p95: f64,
}

impl MeanP95 {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Self {
            mean,
            p95: nearest_rank(samples, 95.0),
        }
    }
}

/// Nearest-rank percentile.
pub fn nearest_rank(samples: &[f64], pct: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeReport {
    pub chunk_ms: f64,
    pub chunks: usize,
    pub asr_feed: MeanP95,
    pub spot: MeanP95,
    pub merge: MeanP95,
    pub total: MeanP95,
    /// Spot + merge per chunk, as a percentage of the chunk duration.
    pub extra_ratio_pct: MeanP95,
}

/// Mean and P95 of each step, plus the extra-processing ratio
/// `(spot + merge) / chunk_ms × 100`.
pub fn runtime_report(samples: &[ChunkTimings], chunk_ms: f64) -> Result<RuntimeReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    if !(chunk_ms > 0.0) {
        return Err(EvalError::BadChunkDuration);
    }
    let col = |f: fn(&ChunkTimings) -> f64| MeanP95::of(&samples.iter().map(f).collect::<Vec<_>>());
    let extra: Vec<f64> = samples
        .iter()
        .map(|s| 100.0 * (s.spot_ms + s.merge_ms) / chunk_ms)
        .collect();
    Ok(RuntimeReport {
        chunk_ms,
        chunks: samples.len(),
        asr_feed: col(|s| s.asr_feed_ms),
        spot: col(|s| s.spot_ms),
        merge: col(|s| s.merge_ms),
        total: col(|s| s.total_ms),
        extra_ratio_pct: MeanP95::of(&extra),
    })
}

/// Plain-text table with one column per chunk size (mean / P95).
pub fn format_runtime_table(reports: &[RuntimeReport]) -> String {
    let mut out = format!("{:<26}", "Metric");
    for r in reports {
        out.push_str(&format!("{:>18}", format!("{} ms", r.chunk_ms)));
    }
    out.push('\n');
    let rows: [(&str, fn(&RuntimeReport) -> MeanP95); 5] = [
        ("Decode Time (ms)", |r| r.asr_feed),
        ("Spot Time (ms)", |r| r.spot),
        ("Merge Time (ms)", |r| r.merge),
        ("Total Time (ms)", |r| r.total),
        ("Extra Proc. / Chunk (%)", |r| r.extra_ratio_pct),
    ];
    for (label, get) in rows {
        out.push_str(&format!("{label:<26}"));
        for r in reports {
            let v = get(r);
            out.push_str(&format!("{:>18}", format!("{:.1} / {:.1}", v.mean, v.p95)));
        }
        out.push('\n');
    }
    out
}

/// Plain-text accuracy table: WER and F-score (P/R), all in percent.
pub fn format_accuracy_table(rows: &[(&str, f64, &KeywordReport)]) -> String {
    let mut out = format!("{:<24}{:>8}  {}\n", "System", "WER", "F-score (P/R)");
    for (label, wer, report) in rows {
        out.push_str(&format!(
            "{:<24}{:>8.2}  {:.2} ({:.2}/{:.2})\n",
            label, wer, report.fscore, report.precision, report.recall
        ));
    }
    out
}
