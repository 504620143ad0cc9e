use std::cmp::Ordering;

use super::SpottedCandidate;

/// Inclusive-interval overlap.
#[inline]
pub fn overlaps(a: &SpottedCandidate, b: &SpottedCandidate) -> bool {
    a.start_frame <= b.end_frame && b.start_frame <= a.end_frame
}

fn preference(a: &SpottedCandidate, b: &SpottedCandidate) -> Ordering {
    b.per_frame_score
        .total_cmp(&a.per_frame_score)
        .then_with(|| b.len().cmp(&a.len()))
        .then_with(|| a.keyword_id.cmp(&b.keyword_id))
        .then_with(|| a.start_frame.cmp(&b.start_frame))
}

/// Keeps the best candidate among overlapping detections.
///
/// Candidates are visited best first (per-frame score, then longer interval,
/// then smaller keyword id) and kept unless they overlap something already
/// kept. Output is sorted by start frame.
pub fn dedup_overlaps(candidates: &[SpottedCandidate]) -> Vec<SpottedCandidate> {
    let mut order: Vec<&SpottedCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| preference(a, b));

    // kept intervals, sorted by start
    let mut kept: Vec<SpottedCandidate> = Vec::new();
    for cand in order {
        let at = kept.partition_point(|k| k.start_frame < cand.start_frame);
        let clash = kept[..at].last().is_some_and(|k| overlaps(k, cand))
            || kept.get(at).is_some_and(|k| overlaps(k, cand));
        if !clash {
            kept.insert(at, *cand);
        }
    }
    kept
}
