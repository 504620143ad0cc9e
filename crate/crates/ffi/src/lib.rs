//! C ABI over the `ctcws` streaming pipeline.
//!
//! Handles are opaque and owned by the caller once returned; free them with the
//! matching `*_free` function. Every fallible call returns a [`CtcwsStatus`]
//! and leaves a message retrievable with [`ctcws_last_error_message`] on the
//! calling thread. Strings handed out by the library are NUL-terminated UTF-8
//! and must be released with [`ctcws_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use ctcws::formats::{self, FormatError};
use ctcws::graph::{GraphConfig, GraphError, TokenId};
use ctcws::greedy::WordBoundary;
use ctcws::merge::{self, MergeError, MergePolicy};
use ctcws::pipeline::{Pipeline, PipelineConfig, WordSource};
use ctcws::spotter::{SpotError, SpotterConfig};
use ctcws::tokenizer::GreedyTokenizer;
use ctcws::{ContextGraph, Error, LogProbMatrix};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtcwsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    BiasList = 4,
    Graph = 5,
    DimensionMismatch = 6,
    SessionClosed = 7,
    Internal = 8,
}

/// Spotting and merge tunables, passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtcwsConfig {
    pub cb_weight: f64,
    /// Beam width in log score; `INFINITY` disables pruning.
    pub beam_threshold: f64,
    pub min_per_frame_score: f64,
    pub max_keyword_frames: usize,
    pub intersection_threshold: f64,
    pub score_margin: f64,
    pub allow_insertion: bool,
}

/// Immutable bias graph plus the vocabulary used for greedy decoding.
pub struct CtcwsGraph {
    graph: Arc<ContextGraph>,
    vocab: Arc<[String]>,
}

/// One streaming utterance.
pub struct CtcwsSession {
    pipeline: Pipeline,
    vocab_size: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(CtcwsStatus, String);

impl Failure {
    fn new(status: CtcwsStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Graph(_) => CtcwsStatus::Graph,
            Error::Format(_) | Error::Tokenize(_) => CtcwsStatus::BiasList,
            Error::Spot(SpotError::DimensionMismatch { .. }) | Error::Align(_) | Error::Matrix(_) => {
                CtcwsStatus::DimensionMismatch
            }
            Error::Spot(SpotError::SessionClosed) => CtcwsStatus::SessionClosed,
            Error::Spot(SpotError::InvalidConfig(_)) | Error::Merge(MergeError::InvalidPolicy(_)) => {
                CtcwsStatus::InvalidArgument
            }
            _ => CtcwsStatus::Internal,
        };
        Self(status, e.to_string())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Self(CtcwsStatus::BiasList, e.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Self(CtcwsStatus::Graph, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CtcwsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CtcwsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CtcwsStatus::Internal
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure::new(CtcwsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    opt_str(p, what)?.ok_or_else(|| Failure::new(CtcwsStatus::NullPointer, format!("{what} is NULL")))
}

fn to_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn pipeline_config(cfg: &CtcwsConfig) -> PipelineConfig {
    PipelineConfig {
        spotter: SpotterConfig {
            cb_weight: cfg.cb_weight,
            beam_threshold: cfg.beam_threshold,
            min_per_frame_score: cfg.min_per_frame_score,
            max_keyword_frames: cfg.max_keyword_frames,
        },
        merge: MergePolicy {
            intersection_threshold: cfg.intersection_threshold,
            score_margin: cfg.score_margin,
            allow_insertion: cfg.allow_insertion,
            insert_min_per_frame_score: cfg.min_per_frame_score,
        },
        boundary: WordBoundary::default(),
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ctcws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ctcws_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default tunables.
#[no_mangle]
pub extern "C" fn ctcws_config_default() -> CtcwsConfig {
    let d = PipelineConfig::default();
    CtcwsConfig {
        cb_weight: d.spotter.cb_weight,
        beam_threshold: d.spotter.beam_threshold,
        min_per_frame_score: d.spotter.min_per_frame_score,
        max_keyword_frames: d.spotter.max_keyword_frames,
        intersection_threshold: d.merge.intersection_threshold,
        score_margin: d.merge.score_margin,
        allow_insertion: d.merge.allow_insertion,
    }
}

/// Builds a bias graph from bias-list text (`surface<TAB>id,id,...` per line).
///
/// `vocab_text` is optional: one token string per line, `vocab_size` lines.
/// When given it tokenizes entries without ids and drives greedy decoding;
/// otherwise every token is treated as its own word. A negative `blank_id`
/// selects `vocab_size - 1`.
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctcws_graph_new(
    bias_text: *const c_char,
    vocab_text: *const c_char,
    vocab_size: usize,
    blank_id: i64,
    out: *mut *mut CtcwsGraph,
) -> CtcwsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(CtcwsStatus::NullPointer, "out is NULL"));
        }
        *out = ptr::null_mut();
        let bias = req_str(bias_text, "bias_text")?;
        let vocab = match opt_str(vocab_text, "vocab_text")? {
            Some(text) => {
                let v = formats::parse_vocab(text);
                if v.len() != vocab_size {
                    return Err(Failure::new(
                        CtcwsStatus::InvalidArgument,
                        format!("vocabulary has {} entries, vocab_size is {vocab_size}", v.len()),
                    ));
                }
                Some(v)
            }
            None => None,
        };
        let blank = if blank_id < 0 {
            vocab_size.checked_sub(1)
        } else {
            Some(blank_id as usize)
        }
        .filter(|&b| b <= u32::MAX as usize)
        .ok_or_else(|| Failure::new(CtcwsStatus::InvalidArgument, "vocab_size must be positive"))?;

        let marker = WordBoundary::default().marker;
        let tokenizer = vocab.as_ref().map(|v| GreedyTokenizer::new(v, &marker));
        let entries = formats::parse_bias_list(bias, tokenizer.as_ref())?;
        let graph = ContextGraph::build(
            &entries,
            GraphConfig {
                vocab_size,
                blank_id: TokenId(blank as u32),
            },
        )?;
        let vocab = vocab.unwrap_or_else(|| (0..vocab_size).map(|i| format!("{marker}<{i}>")).collect());
        *out = Box::into_raw(Box::new(CtcwsGraph {
            graph: Arc::new(graph),
            vocab: vocab.into(),
        }));
        Ok(())
    })
}

/// Number of distinct bias phrases in the graph (0 for NULL).
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctcws_graph_keyword_count(graph: *const CtcwsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.terminal_count())
}

/// # Safety
/// `graph` must be NULL or a handle from [`ctcws_graph_new`] not yet freed.
/// Sessions created from it stay valid.
#[no_mangle]
pub unsafe extern "C" fn ctcws_graph_free(graph: *mut CtcwsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Starts a streaming session; `config` may be NULL for defaults.
///
/// # Safety
/// `graph` must be a live handle, `config` NULL or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctcws_session_new(
    graph: *const CtcwsGraph,
    config: *const CtcwsConfig,
    out: *mut *mut CtcwsSession,
) -> CtcwsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(CtcwsStatus::NullPointer, "out is NULL"));
        }
        *out = ptr::null_mut();
        let g = graph
            .as_ref()
            .ok_or_else(|| Failure::new(CtcwsStatus::NullPointer, "graph is NULL"))?;
        let cfg = config.as_ref().copied().unwrap_or_else(|| ctcws_config_default());
        let pipeline = Pipeline::new(
            g.graph.clone(),
            WordSource::Greedy(g.vocab.clone()),
            &pipeline_config(&cfg),
        )?;
        *out = Box::into_raw(Box::new(CtcwsSession {
            pipeline,
            vocab_size: g.graph.vocab_size(),
        }));
        Ok(())
    })
}

unsafe fn emit_delta(delta: &[merge::MergedWord], out: *mut *mut c_char) {
    if !out.is_null() {
        *out = to_c_string(&merge::transcript(delta));
    }
}

/// Feeds `frames` rows of natural-log probabilities (row-major, `vocab`
/// columns). On success `*delta_out` (if non-NULL) receives the newly
/// committed text, possibly empty, and `*frontier_out` (if non-NULL) the
/// commit frontier in frames.
///
/// # Safety
/// `data` must point to `frames * vocab` readable floats (may be NULL when
/// `frames` is 0); out pointers must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ctcws_session_push(
    session: *mut CtcwsSession,
    data: *const f32,
    frames: usize,
    vocab: usize,
    delta_out: *mut *mut c_char,
    frontier_out: *mut usize,
) -> CtcwsStatus {
    guard(|| {
        let s = session
            .as_mut()
            .ok_or_else(|| Failure::new(CtcwsStatus::NullPointer, "session is NULL"))?;
        if vocab != s.vocab_size {
            return Err(Failure::new(
                CtcwsStatus::DimensionMismatch,
                format!("chunk has {vocab} columns, graph vocabulary is {}", s.vocab_size),
            ));
        }
        let len = frames
            .checked_mul(vocab)
            .ok_or_else(|| Failure::new(CtcwsStatus::InvalidArgument, "chunk size overflows"))?;
        let values = if len == 0 {
            Vec::new()
        } else if data.is_null() {
            return Err(Failure::new(CtcwsStatus::NullPointer, "data is NULL"));
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        let chunk = LogProbMatrix::new(frames, vocab, values).map_err(Error::from)?;
        let report = s.pipeline.push_chunk(&chunk)?;
        emit_delta(&report.output.committed_delta, delta_out);
        if !frontier_out.is_null() {
            *frontier_out = report.output.commit_frontier;
        }
        Ok(())
    })
}

/// Ends the utterance, committing everything still held. Further pushes
/// return `CTCWS_STATUS_SESSION_CLOSED`.
///
/// # Safety
/// `session` must be a live handle; `delta_out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ctcws_session_flush(session: *mut CtcwsSession, delta_out: *mut *mut c_char) -> CtcwsStatus {
    guard(|| {
        let s = session
            .as_mut()
            .ok_or_else(|| Failure::new(CtcwsStatus::NullPointer, "session is NULL"))?;
        let report = s.pipeline.finish()?;
        emit_delta(&report.output.committed_delta, delta_out);
        Ok(())
    })
}

/// Full committed transcript so far, as a new string.
///
/// # Safety
/// `session` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctcws_session_transcript(session: *const CtcwsSession, out: *mut *mut c_char) -> CtcwsStatus {
    guard(|| {
        let s = session
            .as_ref()
            .ok_or_else(|| Failure::new(CtcwsStatus::NullPointer, "session is NULL"))?;
        if out.is_null() {
            return Err(Failure::new(CtcwsStatus::NullPointer, "out is NULL"));
        }
        *out = to_c_string(&s.pipeline.transcript());
        Ok(())
    })
}

/// Frames consumed so far (0 for NULL).
///
/// # Safety
/// `session` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctcws_session_frames_seen(session: *const CtcwsSession) -> usize {
    session.as_ref().map_or(0, |s| s.pipeline.spotter().frames_seen())
}

/// # Safety
/// `session` must be NULL or a handle from [`ctcws_session_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctcws_session_free(session: *mut CtcwsSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ctcws_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
