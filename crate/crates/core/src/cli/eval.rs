use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use ctcws::formats;
use ctcws::metrics::{corpus_wer, format_accuracy_table, keyword_prf, normalize_words, EvalError};

use super::{emit, CliError};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference transcripts, one utterance per line.
    #[arg(long)]
    pub refs: PathBuf,
    /// Hypothesis transcripts, one utterance per line, same order.
    #[arg(long)]
    pub hyps: PathBuf,
    /// Bias list (only the surface column is used).
    #[arg(long, short = 'b')]
    pub bias: PathBuf,
    /// Emit one record per bias phrase as well.
    #[arg(long)]
    pub per_keyword: bool,
    /// Print a plain-text table instead of JSON records.
    #[arg(long)]
    pub table: bool,
    /// Row label for the table.
    #[arg(long, default_value = "hypothesis")]
    pub label: String,
}

fn lines(text: &str) -> Vec<String> {
    text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect()
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let refs = lines(&formats::read_text(&args.refs)?);
    let hyps = lines(&formats::read_text(&args.hyps)?);
    if refs.len() != hyps.len() {
        return Err(ctcws::Error::from(EvalError::CountMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        })
        .into());
    }
    let phrases: Vec<String> = formats::read_text(&args.bias)?
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').next().unwrap_or_default().trim().to_string())
        .collect();

    let ref_words: Vec<Vec<String>> = refs.iter().map(|r| normalize_words(r)).collect();
    let hyp_words: Vec<Vec<String>> = hyps.iter().map(|h| normalize_words(h)).collect();
    let wer = corpus_wer(&ref_words, &hyp_words).map_err(ctcws::Error::from)?;
    let report = keyword_prf(&refs, &hyps, &phrases).map_err(ctcws::Error::from)?;

    if args.table {
        print!("{}", format_accuracy_table(&[(args.label.as_str(), wer, &report)]));
        return Ok(());
    }
    emit(&json!({
        "type": "eval",
        "utterances": refs.len(),
        "wer": wer,
        "precision": report.precision,
        "recall": report.recall,
        "fscore": report.fscore,
        "hits": report.totals.hits,
        "false_alarms": report.totals.false_alarms,
        "misses": report.totals.misses,
    }));
    if args.per_keyword {
        for p in &report.per_keyword {
            emit(&json!({
                "type": "keyword",
                "phrase": p.phrase,
                "hits": p.counts.hits,
                "false_alarms": p.counts.false_alarms,
                "misses": p.counts.misses,
                "precision": p.counts.precision(),
                "recall": p.counts.recall(),
                "fscore": p.counts.fscore(),
            }));
        }
    }
    Ok(())
}
