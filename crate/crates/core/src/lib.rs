//! Streaming CTC word spotting for contextual biasing.
//!
//! The engine consumes CTC log-probability matrices (frames × vocabulary),
//! spots bias-list phrases with a trie token-passing search, and merges the
//! detections into a greedy (or externally supplied) word alignment. The
//! streaming path keeps partial keyword hypotheses alive across chunk
//! boundaries and only commits text that no future frame can change, so the
//! final transcript is identical to running the whole utterance at once.
//!
//! Module map:
//! - [`graph`]: trie context graph over tokenized bias phrases.
//! - [`spotter`]: offline and streaming token passing, de-overlap.
//! - [`greedy`]: greedy CTC decoding with word-level alignment.
//! - [`merge`]: intersection-based replacement and the streaming commit step.
//! - [`pipeline`]: offline and chunked pipelines wiring the above together.
//! - [`formats`]: logits, bias-list, alignment and stream-envelope formats.
//! - [`metrics`]: WER, keyword precision/recall/F-score, runtime accounting.
//! - [`synth`]: synthetic log-probabilities and brute-force scoring oracles.

pub mod error;
pub mod formats;
pub mod graph;
pub mod greedy;
pub mod logprobs;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod spotter;
pub mod synth;
pub mod tokenizer;

pub use error::Error;
pub use graph::{BiasEntry, ContextGraph, GraphConfig, NodeId, SubState, TokenId};
pub use greedy::{greedy_decode, StreamingAligner, WordAlignment, WordBoundary};
pub use logprobs::LogProbMatrix;
pub use merge::{merge_region, ChunkOutput, CommitState, MergePolicy, MergedWord};
pub use pipeline::{OfflineResult, Pipeline, PipelineConfig};
pub use spotter::{
    dedup_overlaps, spot_offline, ActiveToken, SpotChunkResult, SpottedCandidate, SpotterConfig,
    SpotterSession,
};
