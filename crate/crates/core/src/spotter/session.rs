use std::sync::Arc;

use crate::graph::ContextGraph;
use crate::logprobs::LogProbMatrix;

use super::search::TokenPasser;
use super::{dedup_overlaps, overlaps, ActiveToken, SpotError, SpottedCandidate, SpotterConfig};

/// What is still undecided after a chunk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeldPreview {
    /// Completed candidates that may still lose to an overlapping detection.
    pub candidates: Vec<SpottedCandidate>,
    pub active_tokens: usize,
}

impl HeldPreview {
    /// Earliest frame any held candidate touches.
    pub fn earliest_start(&self) -> Option<usize> {
        self.candidates.iter().map(|c| c.start_frame).min()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpotChunkResult {
    /// Frames before this index can no longer be touched by a future
    /// candidate.
    pub new_frontier: usize,
    pub frames_seen: usize,
    /// De-overlapped candidates committed by this call, sorted by start.
    pub finalized: Vec<SpottedCandidate>,
    pub held: HeldPreview,
}

/// Chunk-by-chunk spotter state for one utterance.
#[derive(Debug, Clone)]
pub struct SpotterSession {
    graph: Arc<ContextGraph>,
    cfg: SpotterConfig,
    passer: TokenPasser,
    pending: Vec<SpottedCandidate>,
    frames_seen: usize,
    commit_frontier: usize,
    last_finalized_end: Option<usize>,
    closed: bool,
}

impl SpotterSession {
    pub fn new(graph: Arc<ContextGraph>, cfg: SpotterConfig) -> Result<Self, SpotError> {
        cfg.validate()?;
        let passer = TokenPasser::new(&graph);
        Ok(Self {
            graph,
            cfg,
            passer,
            pending: Vec::new(),
            frames_seen: 0,
            commit_frontier: 0,
            last_finalized_end: None,
            closed: false,
        })
    }

    pub fn graph(&self) -> &Arc<ContextGraph> {
        &self.graph
    }

    pub fn config(&self) -> &SpotterConfig {
        &self.cfg
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn commit_frontier(&self) -> usize {
        self.commit_frontier
    }

    pub fn active_tokens(&self) -> &[ActiveToken] {
        self.passer.active()
    }

    pub fn pending(&self) -> &[SpottedCandidate] {
        &self.pending
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn process_chunk(&mut self, chunk: &LogProbMatrix) -> Result<SpotChunkResult, SpotError> {
        if self.closed {
            return Err(SpotError::SessionClosed);
        }
        if chunk.is_empty() {
            return Ok(self.finalize());
        }
        if !self.graph.is_empty() {
            if chunk.vocab() != self.graph.vocab_size() {
                return Err(SpotError::DimensionMismatch {
                    matrix: chunk.vocab(),
                    graph: self.graph.vocab_size(),
                });
            }
            for (i, row) in chunk.rows().enumerate() {
                self.passer.step(
                    &self.graph,
                    &self.cfg,
                    row,
                    self.frames_seen + i,
                    &mut self.pending,
                );
            }
        }
        self.frames_seen += chunk.frames();
        Ok(self.finalize())
    }

    /// Ends the utterance: drops live hypotheses and finalizes everything.
    pub fn flush(&mut self) -> Result<SpotChunkResult, SpotError> {
        if self.closed {
            return Err(SpotError::SessionClosed);
        }
        self.passer.clear();
        let result = self.finalize();
        self.closed = true;
        Ok(result)
    }

    fn finalize(&mut self) -> SpotChunkResult {
        let frontier = self.passer.earliest_start().unwrap_or(self.frames_seen);
        debug_assert!(frontier >= self.commit_frontier);
        self.commit_frontier = frontier.max(self.commit_frontier);

        // A candidate is released only with its whole overlap cluster, and
        // only once that cluster ends before the frontier: nothing found
        // later can start before the frontier, so the cluster is complete.
        self.pending
            .sort_by(|a, b| a.start_frame.cmp(&b.start_frame).then(a.end_frame.cmp(&b.end_frame)));
        let mut ready = Vec::new();
        let mut held = Vec::new();
        let mut cluster: Vec<SpottedCandidate> = Vec::new();
        let mut cluster_end = 0;
        let flush_cluster =
            |cluster: &mut Vec<SpottedCandidate>, end: usize, ready: &mut Vec<_>, held: &mut Vec<_>| {
                if end < frontier {
                    ready.append(cluster);
                } else {
                    held.append(cluster);
                }
            };
        for cand in self.pending.drain(..) {
            if !cluster.is_empty() && cand.start_frame > cluster_end {
                flush_cluster(&mut cluster, cluster_end, &mut ready, &mut held);
            }
            cluster_end = if cluster.is_empty() {
                cand.end_frame
            } else {
                cluster_end.max(cand.end_frame)
            };
            cluster.push(cand);
        }
        if !cluster.is_empty() {
            flush_cluster(&mut cluster, cluster_end, &mut ready, &mut held);
        }
        self.pending = held;

        let finalized = dedup_overlaps(&ready);
        if let (Some(prev_end), Some(first)) = (self.last_finalized_end, finalized.first()) {
            debug_assert!(first.start_frame > prev_end);
        }
        if let Some(last) = finalized.last() {
            self.last_finalized_end = Some(last.end_frame);
        }
        debug_assert!(finalized
            .windows(2)
            .all(|w| !overlaps(&w[0], &w[1])));

        SpotChunkResult {
            new_frontier: self.commit_frontier,
            frames_seen: self.frames_seen,
            finalized,
            held: HeldPreview {
                candidates: self.pending.clone(),
                active_tokens: self.passer.active().len(),
            },
        }
    }
}
