//! `ctcws` command-line interface.
//!
//! Exit codes: 0 ok, 1 usage or configuration error, 2 input format error,
//! 3 stream protocol error.

mod eval;
mod spot;
mod stream;
mod synth;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ctcws::formats::{self, Normalization};
use ctcws::graph::{ContextGraph, GraphConfig, TokenId};
use ctcws::greedy::WordBoundary;
use ctcws::merge::MergePolicy;
use ctcws::pipeline::{PipelineConfig, WordSource};
use ctcws::spotter::{SpotError, SpotterConfig};
use ctcws::tokenizer::GreedyTokenizer;
use ctcws::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_PROTOCOL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ctcws", version, about = "Streaming CTC word spotting for contextual biasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spot and merge over a whole utterance.
    Spot(spot::SpotArgs),
    /// Simulated streaming: chunked spotting with incremental commits.
    Stream(stream::StreamArgs),
    /// WER and bias-phrase precision/recall/F-score.
    Eval(eval::EvalArgs),
    /// Write a synthetic logits file and its reference transcript.
    Synth(synth::SynthArgs),
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FORMAT,
            message: message.into(),
        }
    }

    pub fn protocol(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_PROTOCOL,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Spot(SpotError::InvalidConfig(_))
            | Error::Merge(ctcws::merge::MergeError::InvalidPolicy(_))
            | Error::Synth(_) => EXIT_USAGE,
            _ => EXIT_FORMAT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<formats::FormatError> for CliError {
    fn from(e: formats::FormatError) -> Self {
        Error::from(e).into()
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Spot(args) => spot::run(args),
        Command::Stream(args) => stream::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Synth(args) => synth::run(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ctcws: {e}");
            e.code
        }
    }
}

/// Inputs and tunables shared by `spot` and `stream`.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Bias list: `surface<TAB>id,id,...` per line.
    #[arg(long, short = 'b')]
    pub bias: Option<PathBuf>,
    /// Vocabulary, one token string per line (line number = token id).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// External word alignment (`word<TAB>start<TAB>end<TAB>score`), replacing greedy decoding.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// Blank token id [default: vocabulary size - 1].
    #[arg(long)]
    pub blank_id: Option<u32>,
    /// Log-score bonus per newly consumed keyword token.
    #[arg(long, default_value_t = 3.0)]
    pub cb_weight: f64,
    /// Beam width (log score) for pruning; `inf` disables pruning.
    #[arg(long, default_value_t = 7.0)]
    pub beam: f64,
    /// Minimum average log score per frame for a candidate.
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    pub min_per_frame_score: f64,
    /// Longest keyword interval in frames (bounds the hold region).
    #[arg(long, default_value_t = 200)]
    pub max_keyword_frames: usize,
    /// Fraction of a word a candidate must cover (strictly more than) to replace it.
    #[arg(long, default_value_t = 0.5)]
    pub intersection: f64,
    /// Extra log score a candidate needs over the words it replaces.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub score_margin: f64,
    /// Do not insert candidates into regions with no decoder word.
    #[arg(long)]
    pub no_insert: bool,
    /// Word-start marker in the vocabulary (a leading space also counts).
    #[arg(long, default_value = "\u{2581}")]
    pub word_marker: String,
    /// Row normalization check for logits input: strict, warn or ignore.
    #[arg(long, default_value = "warn", value_parser = parse_normalization)]
    pub normalization: Normalization,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    match s {
        "strict" => Ok(Normalization::Strict),
        "warn" => Ok(Normalization::Warn),
        "ignore" => Ok(Normalization::Ignore),
        other => Err(format!("unknown normalization mode {other:?}")),
    }
}

/// Everything built from [`EngineArgs`] once the vocabulary size is known.
pub struct Engine {
    pub graph: Arc<ContextGraph>,
    pub source: WordSource,
    pub config: PipelineConfig,
}

impl EngineArgs {
    pub fn config(&self) -> PipelineConfig {
        let spotter = SpotterConfig {
            cb_weight: self.cb_weight,
            beam_threshold: self.beam,
            min_per_frame_score: self.min_per_frame_score,
            max_keyword_frames: self.max_keyword_frames,
        };
        PipelineConfig {
            spotter,
            merge: MergePolicy {
                intersection_threshold: self.intersection,
                score_margin: self.score_margin,
                allow_insertion: !self.no_insert,
                insert_min_per_frame_score: self.min_per_frame_score,
            },
            boundary: WordBoundary {
                marker: self.word_marker.clone(),
            },
        }
    }

    pub fn build(&self, vocab_size: usize) -> Result<Engine, CliError> {
        let config = self.config();
        config.spotter.validate().map_err(Error::from)?;
        config.merge.validate().map_err(Error::from)?;

        let vocab: Option<Vec<String>> = match &self.vocab {
            Some(path) => {
                let v = formats::parse_vocab(&formats::read_text(path)?);
                if v.len() != vocab_size {
                    return Err(CliError::format(format!(
                        "vocabulary has {} entries, logits have {vocab_size}",
                        v.len()
                    )));
                }
                Some(v)
            }
            None => None,
        };
        let blank = self.blank_id.unwrap_or(vocab_size.saturating_sub(1) as u32);
        let graph_cfg = GraphConfig {
            vocab_size,
            blank_id: TokenId(blank),
        };
        let entries = match &self.bias {
            Some(path) => {
                let tokenizer = vocab
                    .as_ref()
                    .map(|v| GreedyTokenizer::new(v, &self.word_marker));
                formats::parse_bias_list(&formats::read_text(path)?, tokenizer.as_ref())?
            }
            None => Vec::new(),
        };
        let graph = Arc::new(ContextGraph::build(&entries, graph_cfg).map_err(Error::from)?);

        let source = match &self.alignments {
            Some(path) => WordSource::External(formats::parse_alignments(&formats::read_text(path)?)?),
            None => {
                let vocab = vocab.unwrap_or_else(|| {
                    (0..vocab_size).map(|i| format!("{}<{i}>", self.word_marker)).collect()
                });
                WordSource::Greedy(vocab.into())
            }
        };
        Ok(Engine {
            graph,
            source,
            config,
        })
    }

    pub fn manifest(&self, command: &str, extra: serde_json::Value) -> serde_json::Value {
        let c = self.config();
        json!({
            "type": "manifest",
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "formats": {
                "logits": formats::LOGITS_VERSION,
                "envelope": formats::ENVELOPE_VERSION,
            },
            "inputs": {
                "bias": self.bias,
                "vocab": self.vocab,
                "alignments": self.alignments,
            },
            "config": {
                "blank_id": self.blank_id,
                "cb_weight": c.spotter.cb_weight,
                "beam_threshold": finite_or_str(c.spotter.beam_threshold),
                "min_per_frame_score": finite_or_str(c.spotter.min_per_frame_score),
                "max_keyword_frames": c.spotter.max_keyword_frames,
                "intersection_threshold": c.merge.intersection_threshold,
                "score_margin": c.merge.score_margin,
                "allow_insertion": c.merge.allow_insertion,
                "word_marker": c.boundary.marker,
            },
            "run": extra,
        })
    }
}

fn finite_or_str(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn emit(value: &serde_json::Value) {
    println!("{value}");
}
