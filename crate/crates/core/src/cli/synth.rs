use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use ctcws::formats;
use ctcws::greedy::WordBoundary;
use ctcws::synth::{ctc_collapse, generate, ScriptItem, SynthSpec};

use super::{emit, CliError};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Script as `token:frames:peak[:alt_token:alt_prob],...`.
    #[arg(long, conflicts_with = "spec")]
    pub script: Option<String>,
    /// JSON synthesis spec (seed, vocab_size, blank_id, script, noise_temperature).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vocabulary size (ignored with --spec).
    #[arg(long, default_value_t = 32)]
    pub vocab_size: usize,
    /// Blank token id [default: vocabulary size - 1].
    #[arg(long)]
    pub blank_id: Option<u32>,
    /// Spread of the leftover probability mass.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 40.0)]
    pub frame_ms: f32,
    /// Output logits file.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Also write the same matrix as a stream envelope.
    #[arg(long)]
    pub envelope_out: Option<PathBuf>,
    /// Chunk duration for --envelope-out.
    #[arg(long, default_value_t = 1120.0)]
    pub chunk_ms: f64,
    /// Write the scripted transcript here (words need --vocab).
    #[arg(long)]
    pub ref_out: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "\u{2581}")]
    pub word_marker: String,
}

fn parse_script(text: &str) -> Result<Vec<ScriptItem>, CliError> {
    if text.trim().is_empty() {
        return Err(CliError::usage("empty --script"));
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let bad = || CliError::usage(format!("bad script item {item:?}"));
            let parts: Vec<&str> = item.trim().split(':').collect();
            if parts.len() != 3 && parts.len() != 5 {
                return Err(bad());
            }
            let token = parts[0].parse().map_err(|_| bad())?;
            let frames = parts[1].parse().map_err(|_| bad())?;
            let peak = parts[2].parse().map_err(|_| bad())?;
            let mut s = ScriptItem::new(token, frames, peak);
            if parts.len() == 5 {
                s = s.with_runner_up(parts[3].parse().map_err(|_| bad())?, parts[4].parse().map_err(|_| bad())?);
            }
            Ok(s)
        })
        .collect()
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::format(format!("{}: {e}", path.display()))
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let spec = match (&args.spec, &args.script) {
        (Some(path), _) => serde_json::from_str::<SynthSpec>(&formats::read_text(path)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        (None, Some(script)) => SynthSpec {
            seed: args.seed,
            vocab_size: args.vocab_size,
            blank_id: args
                .blank_id
                .unwrap_or(args.vocab_size.saturating_sub(1) as u32),
            script: parse_script(script)?,
            noise_temperature: args.temperature,
        },
        (None, None) => return Err(CliError::usage("one of --script or --spec is required")),
    };
    let out = generate(&spec).map_err(ctcws::Error::from)?;
    formats::write_logits(&args.out, &out.matrix, args.frame_ms)?;

    if let Some(path) = &args.envelope_out {
        let frames = formats::frames_per_chunk(args.chunk_ms, args.frame_ms as f64)
            .map_err(|e| CliError::usage(e.to_string()))?;
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        formats::write_envelope(&mut w, &out.matrix, frames).map_err(|e| io_err(path, e))?;
        w.flush().map_err(|e| io_err(path, e))?;
    }

    let labels: Vec<usize> = out.alignment.iter().map(|s| s.token.index()).collect();
    let tokens = ctc_collapse(&labels, spec.blank_id as usize);

    let reference = match &args.vocab {
        Some(path) => {
            let vocab = formats::parse_vocab(&formats::read_text(path)?);
            let boundary = WordBoundary {
                marker: args.word_marker.clone(),
            };
            let mut words: Vec<String> = Vec::new();
            for t in &tokens {
                let piece = vocab
                    .get(*t)
                    .ok_or_else(|| CliError::format(format!("token {t} not in vocabulary")))?;
                let (starts, text) = boundary.split(piece);
                match words.last_mut() {
                    Some(w) if !starts => w.push_str(text),
                    _ => words.push(text.to_string()),
                }
            }
            words.retain(|w| !w.is_empty());
            words.join(" ")
        }
        None => tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" "),
    };
    if let Some(path) = &args.ref_out {
        std::fs::write(path, format!("{reference}\n")).map_err(|e| io_err(path, e))?;
    }

    emit(&json!({
        "type": "synth",
        "out": args.out,
        "frames": out.matrix.frames(),
        "vocab": out.matrix.vocab(),
        "blank_id": spec.blank_id,
        "seed": spec.seed,
        "frame_duration_ms": args.frame_ms,
        "alignment": out.alignment,
        "reference": reference,
    }));
    Ok(())
}
