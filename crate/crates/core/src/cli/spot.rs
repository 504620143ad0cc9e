use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use ctcws::formats;
use ctcws::pipeline::run_offline;

use super::{emit, CliError, EngineArgs};

#[derive(Debug, Args)]
pub struct SpotArgs {
    /// Logits file (.ctcl).
    pub logits: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Also list every raw candidate before de-overlap.
    #[arg(long)]
    pub all_candidates: bool,
}

pub fn run(args: SpotArgs) -> Result<(), CliError> {
    let file = formats::read_logits(&args.logits, args.engine.normalization)?;
    for w in &file.warnings {
        eprintln!("ctcws: warning: {w}");
    }
    let engine = args.engine.build(file.matrix.vocab())?;
    emit(&args.engine.manifest(
        "spot",
        json!({
            "logits": args.logits,
            "frames": file.matrix.frames(),
            "vocab": file.matrix.vocab(),
            "frame_duration_ms": file.frame_duration_ms,
        }),
    ));

    let result = run_offline(&file.matrix, &engine.graph, &engine.source, &engine.config)?;
    let listed = if args.all_candidates {
        &result.candidates
    } else {
        &result.kept
    };
    for c in listed {
        emit(&json!({
            "type": "candidate",
            "keyword_id": c.keyword_id,
            "surface": engine.graph.surface(c.keyword_id),
            "start_frame": c.start_frame,
            "end_frame": c.end_frame,
            "score": c.score,
            "per_frame_score": c.per_frame_score,
        }));
    }
    emit(&json!({
        "type": "transcript",
        "text": result.transcript(),
        "candidates": result.kept.len(),
        "words": result.merged,
    }));
    Ok(())
}
