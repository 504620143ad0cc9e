use thiserror::Error;

use crate::formats::FormatError;
use crate::graph::GraphError;
use crate::greedy::AlignError;
use crate::logprobs::MatrixError;
use crate::merge::MergeError;
use crate::metrics::EvalError;
use crate::spotter::SpotError;
use crate::synth::SynthError;
use crate::tokenizer::TokenizeError;

/// Any error the engine can report; wraps the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Spot(#[from] SpotError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}
