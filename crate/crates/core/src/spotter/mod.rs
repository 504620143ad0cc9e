//! CTC word spotting by token passing over the context graph.
//!
//! [`spot_offline`] runs over a whole utterance; [`SpotterSession`] runs the
//! same per-frame search chunk by chunk and decides which detections are
//! final. Both drive one shared [`search::TokenPasser`], so the two paths
//! agree exactly when the hold-region cap is not binding.

mod dedup;
mod offline;
pub mod search;
mod session;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{NodeId, SubState};

pub use dedup::{dedup_overlaps, overlaps};
pub use offline::spot_offline;
pub use session::{HeldPreview, SpotChunkResult, SpotterSession};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpotError {
    #[error("log-probability matrix has vocabulary {matrix}, graph expects {graph}")]
    DimensionMismatch { matrix: usize, graph: usize },
    #[error("session already flushed")]
    SessionClosed,
    #[error("invalid spotter config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotterConfig {
    /// Log-score bonus for each newly consumed keyword token.
    pub cb_weight: f64,
    /// Hypotheses more than this far below the frame's best score are pruned.
    pub beam_threshold: f64,
    /// Candidates below this average log score per frame are not reported.
    pub min_per_frame_score: f64,
    /// Longest interval (in frames) a hypothesis may cover.
    pub max_keyword_frames: usize,
}

impl Default for SpotterConfig {
    fn default() -> Self {
        Self {
            cb_weight: 3.0,
            beam_threshold: 7.0,
            min_per_frame_score: -5.0,
            max_keyword_frames: 200,
        }
    }
}

impl SpotterConfig {
    /// No pruning, no score floor, no lifetime cap.
    pub fn exhaustive(cb_weight: f64) -> Self {
        Self {
            cb_weight,
            beam_threshold: f64::INFINITY,
            min_per_frame_score: f64::NEG_INFINITY,
            max_keyword_frames: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<(), SpotError> {
        if !(self.beam_threshold >= 0.0) {
            return Err(SpotError::InvalidConfig(format!(
                "beam_threshold must be >= 0, got {}",
                self.beam_threshold
            )));
        }
        if self.max_keyword_frames == 0 {
            return Err(SpotError::InvalidConfig(
                "max_keyword_frames must be >= 1".into(),
            ));
        }
        if self.cb_weight.is_nan() || self.min_per_frame_score.is_nan() {
            return Err(SpotError::InvalidConfig("NaN parameter".into()));
        }
        Ok(())
    }
}

/// A live, incomplete keyword hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveToken {
    pub node: NodeId,
    pub sub_state: SubState,
    pub score: f64,
    /// Global frame where the hypothesis consumed its first keyword token.
    pub start_frame: usize,
}

/// A completed keyword detection over an inclusive frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpottedCandidate {
    pub keyword_id: u32,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Path log score including the context-biasing bonuses.
    pub score: f64,
    pub per_frame_score: f64,
}

impl SpottedCandidate {
    pub fn new(keyword_id: u32, start_frame: usize, end_frame: usize, score: f64) -> Self {
        Self {
            keyword_id,
            start_frame,
            end_frame,
            score,
            per_frame_score: score / (end_frame - start_frame + 1) as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
