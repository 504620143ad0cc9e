//! Merging spotted keywords into the decoder word alignment.
//!
//! [`merge_region`] is the stateless replacement rule. [`CommitState`] applies
//! it incrementally: it only merges a batch of words and candidates once no
//! future word or candidate can intersect any member of the batch, so the
//! streaming transcript is the offline transcript, emitted append-only.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::graph::ContextGraph;
use crate::greedy::WordAlignment;
use crate::spotter::{SpotChunkResult, SpottedCandidate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error("{what} are not sorted and non-overlapping at index {index}")]
    UnsortedInput { what: &'static str, index: usize },
    #[error("candidate refers to unknown keyword {0}")]
    UnknownKeyword(u32),
    #[error("spotter frontier moved backwards from {previous} to {new}")]
    FrontierRegression { previous: usize, new: usize },
    #[error("invalid merge policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergePolicy {
    /// A word joins a candidate's replacement set when the candidate covers
    /// strictly more than this fraction of the word's frames.
    pub intersection_threshold: f64,
    /// Log-score slack the candidate must exceed the replaced words by.
    pub score_margin: f64,
    /// Insert candidates that touch no decoder word at all.
    pub allow_insertion: bool,
    /// Per-frame score floor for inserted candidates.
    pub insert_min_per_frame_score: f64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        Self {
            intersection_threshold: 0.5,
            score_margin: 0.0,
            allow_insertion: true,
            insert_min_per_frame_score: -5.0,
        }
    }
}

impl MergePolicy {
    pub fn validate(&self) -> Result<(), MergeError> {
        if !(self.intersection_threshold > 0.0 && self.intersection_threshold <= 1.0) {
            return Err(MergeError::InvalidPolicy(format!(
                "intersection_threshold must be in (0, 1], got {}",
                self.intersection_threshold
            )));
        }
        if self.score_margin.is_nan() {
            return Err(MergeError::InvalidPolicy("score_margin is NaN".into()));
        }
        Ok(())
    }
}

/// Maps keyword ids to their output text.
pub trait SurfaceLookup {
    fn surface(&self, keyword_id: u32) -> Option<&str>;
}

impl SurfaceLookup for ContextGraph {
    fn surface(&self, keyword_id: u32) -> Option<&str> {
        ContextGraph::surface(self, keyword_id)
    }
}

impl SurfaceLookup for HashMap<u32, String> {
    fn surface(&self, keyword_id: u32) -> Option<&str> {
        self.get(&keyword_id).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WordOrigin {
    Decoder,
    Replaced { keyword_id: u32, words_replaced: usize },
    Inserted { keyword_id: u32 },
}

/// One word of merged output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedWord {
    pub text: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub score: f64,
    pub origin: WordOrigin,
}

impl MergedWord {
    pub fn is_keyword(&self) -> bool {
        !matches!(self.origin, WordOrigin::Decoder)
    }
}

pub fn transcript(words: &[MergedWord]) -> String {
    words
        .iter()
        .map(|w| w.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[inline]
fn intersection(a_start: usize, a_end: usize, b_start: usize, b_end: usize) -> usize {
    let lo = a_start.max(b_start);
    let hi = a_end.min(b_end);
    if lo > hi {
        0
    } else {
        hi - lo + 1
    }
}

fn check_words(words: &[WordAlignment]) -> Result<(), MergeError> {
    for (i, w) in words.iter().enumerate() {
        let bad = w.start_frame > w.end_frame
            || (i > 0 && words[i - 1].end_frame >= w.start_frame);
        if bad {
            return Err(MergeError::UnsortedInput {
                what: "words",
                index: i,
            });
        }
    }
    Ok(())
}

fn check_candidates(candidates: &[SpottedCandidate]) -> Result<(), MergeError> {
    for (i, c) in candidates.iter().enumerate() {
        let bad = c.start_frame > c.end_frame
            || (i > 0 && candidates[i - 1].end_frame >= c.start_frame);
        if bad {
            return Err(MergeError::UnsortedInput {
                what: "candidates",
                index: i,
            });
        }
    }
    Ok(())
}

/// Replaces or inserts de-overlapped candidates into a word alignment.
///
/// For each candidate, the replacement set is every word that the candidate
/// covers by more than `intersection_threshold` of the word's own length. A
/// non-empty set is replaced by the candidate surface when the candidate
/// score is at least the set's summed path score plus `score_margin`. A
/// candidate touching no word is inserted (if enabled and above the per-frame
/// floor). Anything else is dropped.
pub fn merge_region<S: SurfaceLookup + ?Sized>(
    words: &[WordAlignment],
    candidates: &[SpottedCandidate],
    policy: &MergePolicy,
    surfaces: &S,
) -> Result<Vec<MergedWord>, MergeError> {
    policy.validate()?;
    check_words(words)?;
    check_candidates(candidates)?;

    // a word may be claimed by two neighbouring candidates when the threshold is below one half
    let mut claims: Vec<Vec<usize>> = vec![Vec::new(); words.len()];
    let mut inserted: Vec<usize> = Vec::new();
    let mut group_size: Vec<usize> = vec![0; candidates.len()];

    for (ci, cand) in candidates.iter().enumerate() {
        if surfaces.surface(cand.keyword_id).is_none() {
            return Err(MergeError::UnknownKeyword(cand.keyword_id));
        }
        // words that can intersect: end >= cand.start and start <= cand.end
        let lo = words.partition_point(|w| w.end_frame < cand.start_frame);
        let hi = words.partition_point(|w| w.start_frame <= cand.end_frame);
        let touching = &words[lo..hi.max(lo)];

        let mut covered = Vec::new();
        let mut covered_score = 0.0;
        for (offset, w) in touching.iter().enumerate() {
            let inter = intersection(cand.start_frame, cand.end_frame, w.start_frame, w.end_frame);
            let len = w.end_frame - w.start_frame + 1;
            if inter as f64 > policy.intersection_threshold * len as f64 {
                covered.push(lo + offset);
                covered_score += w.path_score;
            }
        }

        if !covered.is_empty() {
            if cand.score >= covered_score + policy.score_margin {
                group_size[ci] = covered.len();
                for wi in covered {
                    claims[wi].push(ci);
                }
            }
        } else if touching.is_empty()
            && policy.allow_insertion
            && cand.per_frame_score >= policy.insert_min_per_frame_score
        {
            inserted.push(ci);
        }
    }

    let surface = |id: u32| surfaces.surface(id).unwrap_or_default().to_string();
    let mut out = Vec::with_capacity(words.len() + inserted.len());
    let mut ins = inserted.into_iter().peekable();
    let mut emitted = vec![false; candidates.len()];
    for (wi, w) in words.iter().enumerate() {
        while let Some(&ci) = ins.peek() {
            if candidates[ci].start_frame > w.start_frame {
                break;
            }
            let c = &candidates[ci];
            out.push(MergedWord {
                text: surface(c.keyword_id),
                start_frame: c.start_frame,
                end_frame: c.end_frame,
                score: c.score,
                origin: WordOrigin::Inserted {
                    keyword_id: c.keyword_id,
                },
            });
            ins.next();
        }
        if claims[wi].is_empty() {
            out.push(MergedWord {
                text: w.word.clone(),
                start_frame: w.start_frame,
                end_frame: w.end_frame,
                score: w.path_score,
                origin: WordOrigin::Decoder,
            });
        }
        for &ci in &claims[wi] {
            if std::mem::replace(&mut emitted[ci], true) {
                continue;
            }
            let c = &candidates[ci];
            out.push(MergedWord {
                text: surface(c.keyword_id),
                start_frame: c.start_frame,
                end_frame: c.end_frame,
                score: c.score,
                origin: WordOrigin::Replaced {
                    keyword_id: c.keyword_id,
                    words_replaced: group_size[ci],
                },
            });
        }
    }
    for ci in ins {
        let c = &candidates[ci];
        out.push(MergedWord {
            text: surface(c.keyword_id),
            start_frame: c.start_frame,
            end_frame: c.end_frame,
            score: c.score,
            origin: WordOrigin::Inserted {
                keyword_id: c.keyword_id,
            },
        });
    }
    Ok(out)
}

/// Result of one commit step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChunkOutput {
    /// Words committed by this step; never revised afterwards.
    pub committed_delta: Vec<MergedWord>,
    /// Everything before this frame has been emitted.
    pub commit_frontier: usize,
    /// Spotter frontier this step was computed from.
    pub spot_frontier: usize,
    /// Uncommitted decoder text, for display only.
    pub held_text_preview: Option<String>,
}

/// Streaming merge state: closed-but-uncommitted words and finalized
/// candidates waiting for their neighbourhood to settle.
#[derive(Debug, Clone)]
pub struct CommitState {
    policy: MergePolicy,
    graph: Arc<ContextGraph>,
    words: Vec<WordAlignment>,
    candidates: Vec<SpottedCandidate>,
    commit_frontier: usize,
    spot_frontier: usize,
    committed: Vec<MergedWord>,
}

impl CommitState {
    pub fn new(graph: Arc<ContextGraph>, policy: MergePolicy) -> Result<Self, MergeError> {
        policy.validate()?;
        Ok(Self {
            policy,
            graph,
            words: Vec::new(),
            candidates: Vec::new(),
            commit_frontier: 0,
            spot_frontier: 0,
            committed: Vec::new(),
        })
    }

    pub fn policy(&self) -> &MergePolicy {
        &self.policy
    }

    pub fn commit_frontier(&self) -> usize {
        self.commit_frontier
    }

    /// Every word committed so far, in order.
    pub fn committed(&self) -> &[MergedWord] {
        &self.committed
    }

    pub fn transcript(&self) -> String {
        transcript(&self.committed)
    }

    pub fn pending_words(&self) -> &[WordAlignment] {
        &self.words
    }

    /// Adds closed decoder words (in order).
    pub fn push_words(&mut self, words: impl IntoIterator<Item = WordAlignment>) {
        self.words.extend(words);
    }

    /// Commits everything that can no longer change.
    ///
    /// `open_word_start` is the start of a decoder word still being built
    /// (words not yet pushed start no earlier than it); `frames_seen` bounds
    /// future words otherwise.
    pub fn commit_step(
        &mut self,
        spot: &SpotChunkResult,
        open_word_start: Option<usize>,
        frames_seen: usize,
    ) -> Result<ChunkOutput, MergeError> {
        if spot.new_frontier < self.spot_frontier {
            return Err(MergeError::FrontierRegression {
                previous: self.spot_frontier,
                new: spot.new_frontier,
            });
        }
        self.spot_frontier = spot.new_frontier;
        self.candidates.extend_from_slice(&spot.finalized);

        let mut limit = spot.new_frontier.min(open_word_start.unwrap_or(frames_seen));
        if let Some(s) = spot.held.earliest_start() {
            limit = limit.min(s);
        }
        // pull the cut back until nothing straddles it
        loop {
            let straddling = self
                .words
                .iter()
                .map(|w| (w.start_frame, w.end_frame))
                .chain(self.candidates.iter().map(|c| (c.start_frame, c.end_frame)))
                .filter(|&(s, e)| s < limit && e >= limit)
                .map(|(s, _)| s)
                .min();
            match straddling {
                Some(s) => limit = s,
                None => break,
            }
        }
        debug_assert!(limit >= self.commit_frontier);
        self.commit_until(limit.max(self.commit_frontier), spot.new_frontier)
    }

    /// End of utterance: commits every remaining word and candidate.
    pub fn flush(&mut self, spot: &SpotChunkResult) -> Result<ChunkOutput, MergeError> {
        if spot.new_frontier < self.spot_frontier {
            return Err(MergeError::FrontierRegression {
                previous: self.spot_frontier,
                new: spot.new_frontier,
            });
        }
        self.spot_frontier = spot.new_frontier;
        self.candidates.extend_from_slice(&spot.finalized);
        let end = self
            .words
            .iter()
            .map(|w| w.end_frame + 1)
            .chain(self.candidates.iter().map(|c| c.end_frame + 1))
            .max()
            .unwrap_or(0);
        let limit = end.max(spot.new_frontier).max(self.commit_frontier);
        self.commit_until(limit, spot.new_frontier)
    }

    fn commit_until(&mut self, limit: usize, spot_frontier: usize) -> Result<ChunkOutput, MergeError> {
        let word_cut = self.words.partition_point(|w| w.end_frame < limit);
        let cand_cut = self.candidates.partition_point(|c| c.end_frame < limit);
        let words: Vec<_> = self.words.drain(..word_cut).collect();
        let cands: Vec<_> = self.candidates.drain(..cand_cut).collect();
        let delta = merge_region(&words, &cands, &self.policy, self.graph.as_ref())?;
        self.committed.extend(delta.iter().cloned());
        self.commit_frontier = limit;

        let preview: Vec<&str> = self.words.iter().map(|w| w.word.as_str()).collect();
        Ok(ChunkOutput {
            committed_delta: delta,
            commit_frontier: limit,
            spot_frontier,
            held_text_preview: (!preview.is_empty()).then(|| preview.join(" ")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BiasEntry, GraphConfig};
    use crate::spotter::HeldPreview;

    fn word(w: &str, s: usize, e: usize, score: f64) -> WordAlignment {
        WordAlignment {
            word: w.into(),
            start_frame: s,
            end_frame: e,
            path_score: score,
        }
    }

    fn surfaces() -> HashMap<u32, String> {
        [(0, "halsey".to_string()), (1, "justin bieber".to_string())]
            .into_iter()
            .collect()
    }

    #[test]
    fn insert_into_empty_region() {
        let c = SpottedCandidate::new(0, 3, 9, -4.0);
        let out = merge_region(&[], &[c], &MergePolicy::default(), &surfaces()).unwrap();
        assert_eq!(transcript(&out), "halsey");
        assert_eq!(out[0].origin, WordOrigin::Inserted { keyword_id: 0 });
    }

    #[test]
    fn word_shared_by_two_candidates_low_threshold() {
        // at 0.3 both candidates cover more than 30% of "mid"
        let words = [word("a", 0, 2, -5.0), word("mid", 3, 6, -5.0), word("b", 7, 9, -5.0)];
        let p = MergePolicy {
            intersection_threshold: 0.3,
            ..MergePolicy::default()
        };
        let c1 = SpottedCandidate::new(0, 0, 4, 0.0);
        let c2 = SpottedCandidate::new(1, 5, 9, 0.0);
        let out = merge_region(&words, &[c1, c2], &p, &surfaces()).unwrap();
        assert_eq!(transcript(&out), "halsey justin bieber");
        assert!(out.iter().all(|w| matches!(w.origin, WordOrigin::Replaced { .. })));
    }

    #[test]
    fn half_coverage_boundary() {
        let words = [word("hell", 0, 9, -10.0)];
        let p = MergePolicy::default();
        let wide = SpottedCandidate::new(0, 0, 5, -2.0);
        assert_eq!(transcript(&merge_region(&words, &[wide], &p, &surfaces()).unwrap()), "halsey");
        let narrow = SpottedCandidate::new(0, 0, 3, -2.0);
        assert_eq!(transcript(&merge_region(&words, &[narrow], &p, &surfaces()).unwrap()), "hell");
        // exactly 50% is not "more than"
        let half = SpottedCandidate::new(0, 0, 4, -2.0);
        assert_eq!(transcript(&merge_region(&words, &[half], &p, &surfaces()).unwrap()), "hell");
    }

    #[test]
    fn score_gate_and_margin() {
        let words = [word("hell", 0, 9, -3.0)];
        let c = SpottedCandidate::new(0, 0, 9, -2.5);
        let mut p = MergePolicy::default();
        assert_eq!(transcript(&merge_region(&words, &[c], &p, &surfaces()).unwrap()), "halsey");
        p.score_margin = 1.0;
        assert_eq!(transcript(&merge_region(&words, &[c], &p, &surfaces()).unwrap()), "hell");
    }

    #[test]
    fn multi_word_replacement() {
        let words = [
            word("play", 0, 3, -1.0),
            word("just", 5, 8, -2.0),
            word("in", 9, 10, -1.5),
            word("beaver", 11, 16, -3.0),
            word("now", 18, 20, -1.0),
        ];
        let c = SpottedCandidate::new(1, 5, 16, -4.0);
        let out = merge_region(&words, &[c], &MergePolicy::default(), &surfaces()).unwrap();
        assert_eq!(transcript(&out), "play justin bieber now");
        assert_eq!(
            out[1].origin,
            WordOrigin::Replaced {
                keyword_id: 1,
                words_replaced: 3
            }
        );
    }

    #[test]
    fn partial_touch_is_not_inserted() {
        let words = [word("a", 0, 9, -1.0)];
        let c = SpottedCandidate::new(0, 8, 14, -1.0);
        let out = merge_region(&words, &[c], &MergePolicy::default(), &surfaces()).unwrap();
        assert_eq!(transcript(&out), "a");
    }

    #[test]
    fn insertion_orders_by_frame() {
        let words = [word("a", 0, 2, -1.0), word("b", 10, 12, -1.0)];
        let c = SpottedCandidate::new(0, 4, 8, -1.0);
        let out = merge_region(&words, &[c], &MergePolicy::default(), &surfaces()).unwrap();
        assert_eq!(transcript(&out), "a halsey b");
        let mut p = MergePolicy {
            allow_insertion: false,
            ..MergePolicy::default()
        };
        assert_eq!(transcript(&merge_region(&words, &[c], &p, &surfaces()).unwrap()), "a b");
        p.allow_insertion = true;
        p.insert_min_per_frame_score = 0.0;
        assert_eq!(transcript(&merge_region(&words, &[c], &p, &surfaces()).unwrap()), "a b");
    }

    #[test]
    fn rejects_unsorted() {
        let words = [word("b", 5, 6, -1.0), word("a", 0, 1, -1.0)];
        assert_eq!(
            merge_region(&words, &[], &MergePolicy::default(), &surfaces()),
            Err(MergeError::UnsortedInput {
                what: "words",
                index: 1
            })
        );
        let c = [
            SpottedCandidate::new(0, 0, 4, -1.0),
            SpottedCandidate::new(0, 3, 6, -1.0),
        ];
        assert!(matches!(
            merge_region(&[], &c, &MergePolicy::default(), &surfaces()),
            Err(MergeError::UnsortedInput { what: "candidates", .. })
        ));
    }

    fn state() -> CommitState {
        let g = ContextGraph::build(
            &[BiasEntry::new(0, "halsey", &[1])],
            GraphConfig::with_default_blank(4),
        )
        .unwrap();
        CommitState::new(Arc::new(g), MergePolicy::default()).unwrap()
    }

    fn spot(frontier: usize) -> SpotChunkResult {
        SpotChunkResult {
            new_frontier: frontier,
            frames_seen: frontier,
            finalized: vec![],
            held: HeldPreview::default(),
        }
    }

    #[test]
    fn commit_everything_when_settled() {
        let mut st = state();
        st.push_words([word("a", 0, 2, -1.0), word("b", 4, 6, -1.0)]);
        let out = st.commit_step(&spot(10), None, 10).unwrap();
        assert_eq!(transcript(&out.committed_delta), "a b");
        assert_eq!(out.commit_frontier, 10);
    }

    #[test]
    fn straddling_word_is_held() {
        let mut st = state();
        st.push_words([word("a", 2, 8, -1.0), word("b", 10, 20, -1.0)]);
        let out = st.commit_step(&spot(15), None, 25).unwrap();
        assert_eq!(transcript(&out.committed_delta), "a");
        assert_eq!(out.commit_frontier, 10);
        assert_eq!(out.held_text_preview.as_deref(), Some("b"));
        let out = st.commit_step(&spot(25), None, 25).unwrap();
        assert_eq!(transcript(&out.committed_delta), "b");
        assert_eq!(st.transcript(), "a b");
    }

    #[test]
    fn frontier_regression() {
        let mut st = state();
        st.commit_step(&spot(10), None, 10).unwrap();
        assert_eq!(
            st.commit_step(&spot(5), None, 12),
            Err(MergeError::FrontierRegression {
                previous: 10,
                new: 5
            })
        );
    }
}
