//! The per-frame token-passing step shared by offline and streaming spotting.

use crate::graph::{ContextGraph, NodeId, SubState};

use super::{ActiveToken, SpottedCandidate, SpotterConfig};

const EMPTY: u32 = u32::MAX;

#[inline]
fn slot_of(node: NodeId, sub: SubState) -> usize {
    node.index() * 2 + (sub == SubState::NonBlank) as usize
}

/// Active-token set plus scratch buffers for one utterance.
#[derive(Debug, Clone)]
pub struct TokenPasser {
    active: Vec<ActiveToken>,
    next: Vec<ActiveToken>,
    // (node, sub-state) -> position in `next`, or EMPTY
    slots: Vec<u32>,
}

impl TokenPasser {
    pub fn new(graph: &ContextGraph) -> Self {
        Self {
            active: Vec::new(),
            next: Vec::new(),
            slots: vec![EMPTY; graph.node_count() * 2],
        }
    }

    pub fn active(&self) -> &[ActiveToken] {
        &self.active
    }

    pub fn clear(&mut self) {
        self.active.clear();
    }

    /// Earliest start frame among live hypotheses.
    pub fn earliest_start(&self) -> Option<usize> {
        self.active.iter().map(|t| t.start_frame).min()
    }

    #[inline]
    fn relax(&mut self, node: NodeId, sub_state: SubState, score: f64, start_frame: usize) {
        if score == f64::NEG_INFINITY {
            return;
        }
        let slot = slot_of(node, sub_state);
        match self.slots[slot] {
            EMPTY => {
                self.slots[slot] = self.next.len() as u32;
                self.next.push(ActiveToken {
                    node,
                    sub_state,
                    score,
                    start_frame,
                });
            }
            at => {
                let cur = &mut self.next[at as usize];
                if score > cur.score || (score == cur.score && start_frame < cur.start_frame) {
                    cur.score = score;
                    cur.start_frame = start_frame;
                }
            }
        }
    }

    /// Consumes one frame of log-probabilities at global index `frame`.
    ///
    /// Extends every live hypothesis along the CTC transitions, spawns fresh
    /// hypotheses from the root, recombines per `(node, sub-state)`, drops
    /// hypotheses covering more than `max_keyword_frames` frames, prunes
    /// against the frame's best score and against the per-frame score floor,
    /// and reports terminal hypotheses in
    /// the non-blank sub-state as candidates ending at `frame`.
    pub fn step(
        &mut self,
        graph: &ContextGraph,
        cfg: &SpotterConfig,
        row: &[f32],
        frame: usize,
        out: &mut Vec<SpottedCandidate>,
    ) {
        let blank = row[graph.blank_id().index()] as f64;
        let bonus = cfg.cb_weight;

        let active = std::mem::take(&mut self.active);
        for tok in &active {
            let node = graph.node(tok.node);
            // a leaf in the blank sub-state can never report again
            if !node.children().is_empty() {
                self.relax(tok.node, SubState::Blank, tok.score + blank, tok.start_frame);
            }
            let own = node.token;
            if tok.sub_state == SubState::NonBlank {
                if let Some(t) = own {
                    let lp = row[t.index()] as f64;
                    self.relax(tok.node, SubState::NonBlank, tok.score + lp, tok.start_frame);
                }
            }
            for &(t, child) in node.children() {
                if tok.sub_state == SubState::NonBlank && own == Some(t) {
                    continue;
                }
                let lp = row[t.index()] as f64;
                self.relax(child, SubState::NonBlank, tok.score + lp + bonus, tok.start_frame);
            }
        }
        for &(t, child) in graph.node(graph.root()).children() {
            let lp = row[t.index()] as f64;
            self.relax(child, SubState::NonBlank, lp + bonus, frame);
        }

        let max_frames = cfg.max_keyword_frames;
        let mut best = f64::NEG_INFINITY;
        for tok in &self.next {
            self.slots[slot_of(tok.node, tok.sub_state)] = EMPTY;
            if frame - tok.start_frame < max_frames && tok.score > best {
                best = tok.score;
            }
        }
        let floor = best - cfg.beam_threshold;
        let mut survivors = active;
        survivors.clear();
        for tok in self.next.drain(..) {
            if frame - tok.start_frame >= max_frames || tok.score < floor {
                continue;
            }
            // running per-frame score below the candidate floor: drop
            let per_frame = tok.score / (frame - tok.start_frame + 1) as f64;
            if per_frame < cfg.min_per_frame_score {
                continue;
            }
            if tok.sub_state == SubState::NonBlank {
                if let Some(keyword_id) = graph.node(tok.node).terminal_keyword {
                    out.push(SpottedCandidate::new(keyword_id, tok.start_frame, frame, tok.score));
                }
            }
            survivors.push(tok);
        }
        self.active = survivors;
    }
}
