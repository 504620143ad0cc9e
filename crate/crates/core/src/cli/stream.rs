use std::io::{self, BufRead};
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use clap::Args;
use serde_json::json;

use ctcws::formats::{self, EnvelopeRecord};
use ctcws::logprobs::LogProbMatrix;
use ctcws::metrics::{format_runtime_table, runtime_report};
use ctcws::pipeline::{ChunkReport, ChunkTimings, Pipeline};

use super::{emit, CliError, EngineArgs};

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Logits file (.ctcl); omit or pass `-` to read a stream envelope on stdin.
    pub logits: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Chunk duration in ms (160, 560 and 1120 are the usual settings).
    #[arg(long, default_value_t = 1120.0)]
    pub chunk_ms: f64,
    /// Frame duration for envelope input (files carry their own).
    #[arg(long, default_value_t = 40.0)]
    pub frame_ms: f64,
    /// Give up when no envelope record arrives for this long.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Print a mean / P95 runtime table on stderr at the end.
    #[arg(long)]
    pub table: bool,
}

fn chunk_record(report: &ChunkReport) -> serde_json::Value {
    json!({
        "type": if report.is_final { "flush" } else { "chunk" },
        "chunk_index": report.chunk_index,
        "frames_seen": report.frames_seen,
        "commit_frontier": report.output.commit_frontier,
        "spot_frontier": report.output.spot_frontier,
        "committed_delta": report.output.committed_delta.iter().map(|w| w.text.as_str()).collect::<Vec<_>>(),
        "committed_words": report.output.committed_delta,
        "finalized_candidates": report.finalized,
        "held_candidates": report.held_candidates,
        "active_tokens": report.active_tokens,
        "held_text_preview": report.output.held_text_preview,
        "timings": report.timings,
    })
}

struct Session {
    pipeline: Pipeline,
    timings: Vec<ChunkTimings>,
}

impl Session {
    fn push(&mut self, chunk: &LogProbMatrix) -> Result<(), CliError> {
        let report = self.pipeline.push_chunk(chunk)?;
        self.timings.push(report.timings);
        emit(&chunk_record(&report));
        Ok(())
    }

    fn finish(mut self, args: &StreamArgs) -> Result<(), CliError> {
        let report = self.pipeline.finish()?;
        emit(&chunk_record(&report));
        emit(&json!({
            "type": "final",
            "text": self.pipeline.transcript(),
            "words": self.pipeline.committed(),
        }));
        if !self.timings.is_empty() {
            let runtime = runtime_report(&self.timings, args.chunk_ms).map_err(ctcws::Error::from)?;
            emit(&json!({ "type": "runtime", "report": runtime }));
            if args.table {
                eprint!("{}", format_runtime_table(&[runtime]));
            }
        }
        Ok(())
    }
}

pub fn run(args: StreamArgs) -> Result<(), CliError> {
    formats::frames_per_chunk(args.chunk_ms, args.frame_ms).map_err(|e| CliError::usage(e.to_string()))?;
    match args.logits.as_ref().filter(|p| p.as_os_str() != "-") {
        Some(path) => run_file(path.clone(), &args),
        None => run_envelope(&args),
    }
}

fn run_file(path: PathBuf, args: &StreamArgs) -> Result<(), CliError> {
    let file = formats::read_logits(&path, args.engine.normalization)?;
    for w in &file.warnings {
        eprintln!("ctcws: warning: {w}");
    }
    let chunks = formats::chunker(&file.matrix, args.chunk_ms, file.frame_duration_ms as f64)?;
    let engine = args.engine.build(file.matrix.vocab())?;
    emit(&args.engine.manifest(
        "stream",
        json!({
            "logits": path,
            "frames": file.matrix.frames(),
            "vocab": file.matrix.vocab(),
            "frame_duration_ms": file.frame_duration_ms,
            "chunk_ms": args.chunk_ms,
            "chunk_frames": formats::frames_per_chunk(args.chunk_ms, file.frame_duration_ms as f64)?,
        }),
    ));
    let mut session = Session {
        pipeline: Pipeline::new(engine.graph, engine.source, &engine.config)?,
        timings: Vec::new(),
    };
    for chunk in &chunks {
        session.push(chunk)?;
    }
    session.finish(args)
}

fn run_envelope(args: &StreamArgs) -> Result<(), CliError> {
    let (tx, rx) = mpsc::channel::<io::Result<String>>();
    thread::spawn(move || {
        for line in io::stdin().lock().lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });

    let timeout = Duration::from_millis(args.timeout_ms);
    let mut session: Option<Session> = None;
    let mut vocab = None;
    let mut line_no = 0;
    loop {
        let line = match rx.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(CliError::format(format!("reading stdin: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(protocol_violation(&session, "timed out waiting for an envelope record"))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(protocol_violation(&session, "stream ended without an \"end\" record"))
            }
        };
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = EnvelopeRecord::parse_line(&line)
            .map_err(|e| CliError::format(format!("envelope line {line_no}: {e}")))?;
        match record.decode_chunk(vocab)? {
            Some(chunk) => {
                if session.is_none() {
                    vocab = Some(chunk.vocab());
                    let engine = args.engine.build(chunk.vocab())?;
                    emit(&args.engine.manifest(
                        "stream",
                        json!({
                            "input": "envelope",
                            "vocab": chunk.vocab(),
                            "frame_duration_ms": args.frame_ms,
                            "chunk_ms": args.chunk_ms,
                        }),
                    ));
                    session = Some(Session {
                        pipeline: Pipeline::new(engine.graph, engine.source, &engine.config)?,
                        timings: Vec::new(),
                    });
                }
                session.as_mut().expect("session started").push(&chunk)?;
            }
            None => {
                return match session {
                    Some(s) => s.finish(args),
                    // no audio at all: nothing to spot, empty transcript
                    None => {
                        emit(&json!({ "type": "final", "text": "", "words": [] }));
                        Ok(())
                    }
                };
            }
        }
    }
}

fn protocol_violation(session: &Option<Session>, what: &str) -> CliError {
    let committed = session
        .as_ref()
        .map(|s| s.pipeline.transcript())
        .unwrap_or_default();
    emit(&json!({
        "type": "error",
        "partial": true,
        "message": what,
        "committed_text": committed,
    }));
    CliError::protocol(what)
}
