//! End-to-end pipelines: greedy (or external) word alignment, spotting,
//! de-overlap and merge, either over a whole utterance or chunk by chunk.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::error::Error;
use crate::graph::ContextGraph;
use crate::greedy::{greedy_decode, StreamingAligner, WordAlignment, WordBoundary};
use crate::logprobs::LogProbMatrix;
use crate::merge::{self, merge_region, ChunkOutput, CommitState, MergePolicy, MergedWord};
use crate::spotter::{dedup_overlaps, spot_offline, SpotChunkResult, SpottedCandidate, SpotterConfig, SpotterSession};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub spotter: SpotterConfig,
    pub merge: MergePolicy,
    pub boundary: WordBoundary,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let spotter = SpotterConfig::default();
        Self {
            merge: MergePolicy {
                insert_min_per_frame_score: spotter.min_per_frame_score,
                ..MergePolicy::default()
            },
            spotter,
            boundary: WordBoundary::default(),
        }
    }
}

/// Where decoder words come from.
#[derive(Debug, Clone)]
pub enum WordSource {
    /// Greedy CTC decoding of the same log-probabilities.
    Greedy(Arc<[String]>),
    /// Precomputed alignment, e.g. from a transducer decoder.
    External(Vec<WordAlignment>),
}

#[derive(Debug, Clone, Serialize)]
pub struct OfflineResult {
    pub words: Vec<WordAlignment>,
    pub candidates: Vec<SpottedCandidate>,
    pub kept: Vec<SpottedCandidate>,
    pub merged: Vec<MergedWord>,
}

impl OfflineResult {
    pub fn transcript(&self) -> String {
        merge::transcript(&self.merged)
    }
}

/// Whole-utterance pipeline.
pub fn run_offline(
    logprobs: &LogProbMatrix,
    graph: &ContextGraph,
    source: &WordSource,
    cfg: &PipelineConfig,
) -> Result<OfflineResult, Error> {
    let words = match source {
        WordSource::Greedy(vocab) => {
            greedy_decode(logprobs, vocab, graph.blank_id(), &cfg.boundary)?
        }
        WordSource::External(words) => words.clone(),
    };
    let candidates = spot_offline(logprobs, graph, &cfg.spotter)?;
    let kept = dedup_overlaps(&candidates);
    let merged = merge_region(&words, &kept, &cfg.merge, graph)?;
    Ok(OfflineResult {
        words,
        candidates,
        kept,
        merged,
    })
}

#[derive(Debug, Clone)]
enum WordFeed {
    Greedy(StreamingAligner),
    External {
        words: Vec<WordAlignment>,
        next: usize,
    },
}

impl WordFeed {
    fn push(&mut self, chunk: &LogProbMatrix, frames_seen: usize) -> Result<Vec<WordAlignment>, Error> {
        match self {
            WordFeed::Greedy(aligner) => Ok(aligner.push_chunk(chunk)?),
            WordFeed::External { words, next } => {
                let start = *next;
                while *next < words.len() && words[*next].end_frame < frames_seen {
                    *next += 1;
                }
                Ok(words[start..*next].to_vec())
            }
        }
    }

    fn open_start(&self, frames_seen: usize) -> Option<usize> {
        match self {
            WordFeed::Greedy(aligner) => aligner.open_start(),
            WordFeed::External { words, next } => words
                .get(*next)
                .map(|w| w.start_frame)
                .filter(|&s| s < frames_seen),
        }
    }

    fn finish(&mut self) -> Vec<WordAlignment> {
        match self {
            WordFeed::Greedy(aligner) => aligner.finish(),
            WordFeed::External { words, next } => {
                let rest = words[*next..].to_vec();
                *next = words.len();
                rest
            }
        }
    }
}

/// Per-chunk timing breakdown in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChunkTimings {
    /// Decoder-side work: greedy alignment of the chunk.
    pub asr_feed_ms: f64,
    pub spot_ms: f64,
    pub merge_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkReport {
    pub chunk_index: usize,
    pub frames_seen: usize,
    pub output: ChunkOutput,
    pub finalized: Vec<SpottedCandidate>,
    pub held_candidates: usize,
    pub active_tokens: usize,
    pub timings: ChunkTimings,
    pub is_final: bool,
}

/// Chunk-by-chunk pipeline for one utterance.
#[derive(Debug, Clone)]
pub struct Pipeline {
    spotter: SpotterSession,
    feed: WordFeed,
    commit: CommitState,
    chunks: usize,
    finished: bool,
}

impl Pipeline {
    pub fn new(graph: Arc<ContextGraph>, source: WordSource, cfg: &PipelineConfig) -> Result<Self, Error> {
        let feed = match source {
            WordSource::Greedy(vocab) => WordFeed::Greedy(StreamingAligner::new(
                vocab,
                graph.blank_id(),
                cfg.boundary.clone(),
            )),
            WordSource::External(words) => WordFeed::External { words, next: 0 },
        };
        Ok(Self {
            spotter: SpotterSession::new(graph.clone(), cfg.spotter)?,
            commit: CommitState::new(graph, cfg.merge)?,
            feed,
            chunks: 0,
            finished: false,
        })
    }

    pub fn spotter(&self) -> &SpotterSession {
        &self.spotter
    }

    pub fn committed(&self) -> &[MergedWord] {
        self.commit.committed()
    }

    pub fn transcript(&self) -> String {
        self.commit.transcript()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn push_chunk(&mut self, chunk: &LogProbMatrix) -> Result<ChunkReport, Error> {
        let started = Instant::now();
        let spot = self.spotter.process_chunk(chunk)?;
        let spot_ms = ms_since(started);

        let feed_start = Instant::now();
        let frames_seen = self.spotter.frames_seen();
        let words = self.feed.push(chunk, frames_seen)?;
        let asr_feed_ms = ms_since(feed_start);

        let merge_start = Instant::now();
        self.commit.push_words(words);
        let open = self.feed.open_start(frames_seen);
        let output = self.commit.commit_step(&spot, open, frames_seen)?;
        let merge_ms = ms_since(merge_start);

        Ok(self.report(spot, output, spot_ms, asr_feed_ms, merge_ms, started, false))
    }

    /// Flushes the hold region and closes the utterance.
    pub fn finish(&mut self) -> Result<ChunkReport, Error> {
        let started = Instant::now();
        let spot = self.spotter.flush()?;
        let spot_ms = ms_since(started);

        let merge_start = Instant::now();
        let words = self.feed.finish();
        self.commit.push_words(words);
        let output = self.commit.flush(&spot)?;
        let merge_ms = ms_since(merge_start);
        self.finished = true;

        Ok(self.report(spot, output, spot_ms, 0.0, merge_ms, started, true))
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &mut self,
        spot: SpotChunkResult,
        output: ChunkOutput,
        spot_ms: f64,
        asr_feed_ms: f64,
        merge_ms: f64,
        started: Instant,
        is_final: bool,
    ) -> ChunkReport {
        let chunk_index = self.chunks;
        self.chunks += 1;
        ChunkReport {
            chunk_index,
            frames_seen: spot.frames_seen,
            held_candidates: spot.held.candidates.len(),
            active_tokens: spot.held.active_tokens,
            finalized: spot.finalized,
            output,
            timings: ChunkTimings {
                asr_feed_ms,
                spot_ms,
                merge_ms,
                total_ms: ms_since(started),
            },
            is_final,
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
