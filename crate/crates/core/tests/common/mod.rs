//! Shared generators and drivers for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use ctcws::graph::{BiasEntry, ContextGraph, GraphConfig, TokenId};
use ctcws::pipeline::{Pipeline, PipelineConfig, WordSource};
use ctcws::spotter::{overlaps, SpottedCandidate, SpotterConfig, SpotterSession};
use ctcws::{LogProbMatrix, MergedWord};

/// Log-softmax of `sharpness * N(0,1)` logits with an extra `blank_bias` on
/// the blank column, so silence-like stretches show up.
pub fn ctc_like_matrix<R: Rng>(rng: &mut R, frames: usize, vocab: usize, sharpness: f64, blank_bias: f64) -> LogProbMatrix {
    let blank = vocab - 1;
    let mut values = Vec::with_capacity(frames * vocab);
    let mut logits = vec![0.0f64; vocab];
    for _ in 0..frames {
        for (i, l) in logits.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *l = sharpness * z + if i == blank { blank_bias } else { 0.0 };
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        values.extend(logits.iter().map(|l| (l - lse) as f32));
    }
    LogProbMatrix::new(frames, vocab, values).unwrap()
}

/// Up to `max_keywords` distinct keywords of 1..=`max_len` non-blank tokens.
pub fn random_keywords<R: Rng>(rng: &mut R, vocab: usize, max_keywords: usize, max_len: usize) -> Vec<BiasEntry> {
    let n = rng.random_range(0..=max_keywords);
    let mut seen: Vec<Vec<u32>> = Vec::new();
    for _ in 0..n {
        let len = rng.random_range(1..=max_len);
        let toks: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab as u32 - 1)).collect();
        if !seen.contains(&toks) {
            seen.push(toks);
        }
    }
    seen.iter()
        .enumerate()
        .map(|(i, t)| BiasEntry::new(i as u32, format!("kw{i}"), t))
        .collect()
}

pub fn build_graph(entries: &[BiasEntry], vocab: usize) -> Arc<ContextGraph> {
    Arc::new(ContextGraph::build(entries, GraphConfig::with_default_blank(vocab)).unwrap())
}

/// Vocabulary where roughly half the pieces start a word.
pub fn random_vocab<R: Rng>(rng: &mut R, vocab: usize) -> Arc<[String]> {
    (0..vocab)
        .map(|i| {
            if i == vocab - 1 {
                "<b>".to_string()
            } else if i == 0 || rng.random_bool(0.5) {
                format!("\u{2581}w{i}")
            } else {
                format!("p{i}")
            }
        })
        .collect()
}

/// Random chunk sizes summing to `total`, occasionally including empty chunks.
pub fn random_partition<R: Rng>(rng: &mut R, total: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = total;
    let max = rng.random_range(1..=total.max(1));
    while left > 0 {
        if rng.random_bool(0.05) {
            sizes.push(0);
        }
        let s = rng.random_range(1..=max.min(left));
        sizes.push(s);
        left -= s;
    }
    if rng.random_bool(0.1) {
        sizes.push(0);
    }
    sizes.shuffle(rng);
    sizes
}

/// Everything a streaming run produced, for comparison with offline runs.
#[derive(Debug, Default)]
pub struct StreamRun {
    pub finalized: Vec<SpottedCandidate>,
    pub committed: Vec<MergedWord>,
    pub transcript: String,
    pub max_hold: usize,
    pub violations: Vec<String>,
}

/// Drives a spotter session alone and checks the per-chunk invariants.
pub fn stream_spotter(matrix: &LogProbMatrix, graph: &Arc<ContextGraph>, cfg: SpotterConfig, sizes: &[usize]) -> StreamRun {
    let mut session = SpotterSession::new(graph.clone(), cfg).unwrap();
    let mut run = StreamRun::default();
    let mut last_frontier = 0;
    let parts = matrix.split_at_sizes(sizes);
    let mut results = Vec::new();
    for part in &parts {
        results.push(session.process_chunk(part).unwrap());
    }
    results.push(session.flush().unwrap());
    for (i, r) in results.iter().enumerate() {
        if r.new_frontier < last_frontier {
            run.violations.push(format!("step {i}: frontier {} < {last_frontier}", r.new_frontier));
        }
        if r.new_frontier > r.frames_seen {
            run.violations.push(format!("step {i}: frontier beyond frames_seen"));
        }
        last_frontier = r.new_frontier;
        run.max_hold = run.max_hold.max(r.frames_seen - r.new_frontier);
        for c in &r.finalized {
            if c.end_frame >= r.new_frontier {
                run.violations.push(format!("step {i}: finalized {c:?} not before frontier {}", r.new_frontier));
            }
            if let Some(prev) = run.finalized.iter().find(|p| overlaps(p, c)) {
                run.violations.push(format!("step {i}: {c:?} overlaps earlier {prev:?}"));
            }
            run.finalized.push(*c);
        }
    }
    run
}

/// Drives the full streaming pipeline and checks commit invariants.
pub fn stream_pipeline(
    matrix: &LogProbMatrix,
    graph: &Arc<ContextGraph>,
    source: WordSource,
    cfg: &PipelineConfig,
    sizes: &[usize],
) -> StreamRun {
    let mut p = Pipeline::new(graph.clone(), source, cfg).unwrap();
    let mut run = StreamRun::default();
    let mut last_commit = 0;
    let mut last_spot = 0;
    let parts = matrix.split_at_sizes(sizes);
    let mut reports = Vec::new();
    for part in &parts {
        reports.push(p.push_chunk(part).unwrap());
    }
    reports.push(p.finish().unwrap());
    for (i, r) in reports.iter().enumerate() {
        let o = &r.output;
        if o.commit_frontier < last_commit {
            run.violations.push(format!("step {i}: commit frontier regressed"));
        }
        if o.spot_frontier < last_spot {
            run.violations.push(format!("step {i}: spot frontier regressed"));
        }
        last_commit = o.commit_frontier;
        last_spot = o.spot_frontier;
        run.max_hold = run.max_hold.max(r.frames_seen - o.spot_frontier);
        for w in &o.committed_delta {
            if let Some(prev) = run.committed.last() {
                if w.start_frame < prev.start_frame {
                    run.violations.push(format!("step {i}: {w:?} starts before {prev:?}"));
                }
            }
            run.committed.push(w.clone());
        }
        for c in &r.finalized {
            if let Some(prev) = run.finalized.iter().find(|p| overlaps(p, c)) {
                run.violations.push(format!("step {i}: {c:?} overlaps earlier {prev:?}"));
            }
            run.finalized.push(*c);
        }
    }
    if p.committed() != run.committed.as_slice() {
        run.violations.push("committed deltas are not the committed prefix".into());
    }
    run.transcript = p.transcript();
    run
}

pub fn same_candidates(a: &[SpottedCandidate], b: &[SpottedCandidate], tol: f64) -> Result<(), String> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let key = |c: &SpottedCandidate| (c.start_frame, c.end_frame, c.keyword_id);
    a.sort_by_key(key);
    b.sort_by_key(key);
    if a.len() != b.len() {
        return Err(format!("{} vs {} candidates:\n{a:?}\n{b:?}", a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(&b) {
        if key(x) != key(y) || (x.score - y.score).abs() > tol {
            return Err(format!("{x:?} != {y:?}"));
        }
    }
    Ok(())
}

pub fn token_ids(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().map(|&t| TokenId(t)).collect()
}
