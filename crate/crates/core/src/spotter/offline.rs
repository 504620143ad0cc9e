use crate::graph::ContextGraph;
use crate::logprobs::LogProbMatrix;

use super::search::TokenPasser;
use super::{SpotError, SpottedCandidate, SpotterConfig};

/// Spots every keyword over a complete utterance.
///
/// Returns all candidates (before de-overlap) ordered by end frame.
pub fn spot_offline(
    logprobs: &LogProbMatrix,
    graph: &ContextGraph,
    cfg: &SpotterConfig,
) -> Result<Vec<SpottedCandidate>, SpotError> {
    cfg.validate()?;
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    if logprobs.vocab() != graph.vocab_size() {
        return Err(SpotError::DimensionMismatch {
            matrix: logprobs.vocab(),
            graph: graph.vocab_size(),
        });
    }
    let mut passer = TokenPasser::new(graph);
    let mut out = Vec::new();
    for (frame, row) in logprobs.rows().enumerate() {
        passer.step(graph, cfg, row, frame, &mut out);
    }
    Ok(out)
}
