//! On-disk and on-wire formats.
//!
//! Logits file (`.ctcl`), all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CTCL"
//! 4       4     version (u32, currently 1)
//! 8       4     frames T (u32)
//! 12      4     vocabulary V (u32)
//! 16      4     frame duration in ms (f32)
//! 20      4·T·V natural-log probabilities (f32), row-major
//! ```
//!
//! Bias list: UTF-8, `surface<TAB>id,id,...` per line, `#` comments. A line
//! with only a surface is tokenized with the vocabulary, if one is given.
//!
//! Alignments: UTF-8, `word<TAB>start<TAB>end<TAB>path_score` per line.
//!
//! Stream envelope: one JSON object per line, either
//! `{"type":"chunk","n_frames":N,"frames":"<base64 f32 LE payload>"}` or
//! `{"type":"end"}`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BiasEntry, TokenId};
use crate::greedy::WordAlignment;
use crate::logprobs::{LogProbMatrix, MatrixError};
use crate::tokenizer::{GreedyTokenizer, TokenizeError};

pub const LOGITS_MAGIC: &[u8; 4] = b"CTCL";
pub const LOGITS_VERSION: u32 = 1;
pub const LOGITS_HEADER_LEN: usize = 20;
pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad magic {0:?}, expected \"CTCL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported logits version {0}")]
    UnsupportedVersion(u32),
    #[error("file too short for header ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("payload truncated: header needs {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid frame duration {0} ms")]
    BadFrameDuration(f32),
    #[error("row {row} is not normalized (log-sum-exp {lse:.6})")]
    UnnormalizedRows { row: usize, lse: f64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Tokenize {
        line: usize,
        #[source]
        source: TokenizeError,
    },
    #[error("words {first:?} and {second:?} overlap")]
    OverlappingWords { first: String, second: String },
    #[error("line {line}: end frame {end} precedes start frame {start}")]
    NegativeInterval { line: usize, start: i64, end: i64 },
    #[error("chunk of {chunk_ms} ms is shorter than one {frame_ms} ms frame")]
    ChunkTooSmall { chunk_ms: f64, frame_ms: f64 },
    #[error("stream envelope: {0}")]
    Envelope(String),
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// What to do with rows that do not exponentiate to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    Strict,
    #[default]
    Warn,
    Ignore,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LogitsFile {
    pub matrix: LogProbMatrix,
    pub frame_duration_ms: f32,
    /// Rows that failed the normalization check under [`Normalization::Warn`].
    pub warnings: Vec<String>,
}

pub fn encode_logits(matrix: &LogProbMatrix, frame_duration_ms: f32) -> Vec<u8> {
    let mut buf = Vec::with_capacity(LOGITS_HEADER_LEN + 4 * matrix.values().len());
    buf.extend_from_slice(LOGITS_MAGIC);
    buf.extend_from_slice(&LOGITS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(matrix.vocab() as u32).to_le_bytes());
    buf.extend_from_slice(&frame_duration_ms.to_le_bytes());
    for v in matrix.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f32s(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

pub fn decode_logits(bytes: &[u8], normalization: Normalization) -> Result<LogitsFile, FormatError> {
    if bytes.len() < LOGITS_HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != LOGITS_MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FormatError::TruncatedHeader(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != LOGITS_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u32_at(bytes, 4);
    if version != LOGITS_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let frames = u32_at(bytes, 8) as usize;
    let vocab = u32_at(bytes, 12) as usize;
    let frame_duration_ms = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    if !(frame_duration_ms > 0.0 && frame_duration_ms.is_finite()) {
        return Err(FormatError::BadFrameDuration(frame_duration_ms));
    }
    let payload = &bytes[LOGITS_HEADER_LEN..];
    let expected = frames
        .checked_mul(vocab)
        .and_then(|n| n.checked_mul(4))
        .unwrap_or(usize::MAX);
    if payload.len() < expected {
        return Err(FormatError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingBytes(payload.len() - expected));
    }
    let matrix = LogProbMatrix::new(frames, vocab, f32s(payload))?;
    let warnings = check_rows(&matrix, normalization)?;
    Ok(LogitsFile {
        matrix,
        frame_duration_ms,
        warnings,
    })
}

fn check_rows(matrix: &LogProbMatrix, normalization: Normalization) -> Result<Vec<String>, FormatError> {
    if normalization == Normalization::Ignore {
        return Ok(Vec::new());
    }
    let mut warnings = Vec::new();
    for (row, values) in matrix.rows().enumerate() {
        let lse = crate::logprobs::log_sum_exp(values);
        if !(lse.abs() <= NORMALIZATION_TOLERANCE) {
            if normalization == Normalization::Strict {
                return Err(FormatError::UnnormalizedRows { row, lse });
            }
            warnings.push(format!("row {row} log-sum-exp {lse:.6}"));
        }
    }
    Ok(warnings)
}

pub fn read_logits(path: impl AsRef<Path>, normalization: Normalization) -> Result<LogitsFile, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_logits(&bytes, normalization)
}

pub fn write_logits(
    path: impl AsRef<Path>,
    matrix: &LogProbMatrix,
    frame_duration_ms: f32,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, encode_logits(matrix, frame_duration_ms)).map_err(|e| FormatError::io(path, e))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String, FormatError> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

/// One token string per line; the line number is the token id.
pub fn parse_vocab(text: &str) -> Vec<String> {
    text.lines().map(str::to_string).collect()
}

/// Parses a bias list. Keyword ids follow entry order.
pub fn parse_bias_list(
    text: &str,
    tokenizer: Option<&GreedyTokenizer>,
) -> Result<Vec<BiasEntry>, FormatError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (surface, ids) = match trimmed.split_once('\t') {
            Some((s, ids)) => (s.trim(), Some(ids.trim())),
            None => (trimmed.trim(), None),
        };
        let tokens = match (ids, tokenizer) {
            (Some(ids), _) if !ids.is_empty() => ids
                .split(',')
                .map(|t| {
                    t.trim().parse::<u32>().map(TokenId).map_err(|e| FormatError::Parse {
                        line,
                        message: format!("bad token id {t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            (_, Some(tok)) => tok
                .encode(surface)
                .map_err(|source| FormatError::Tokenize { line, source })?,
            (_, None) => {
                return Err(FormatError::Parse {
                    line,
                    message: format!("no token ids for {surface:?} and no vocabulary to tokenize with"),
                })
            }
        };
        entries.push(BiasEntry {
            keyword_id: entries.len() as u32,
            surface: surface.to_string(),
            tokens,
        });
    }
    Ok(entries)
}

pub fn format_bias_list(entries: &[BiasEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let ids: Vec<String> = e.tokens.iter().map(|t| t.0.to_string()).collect();
        out.push_str(&format!("{}\t{}\n", e.surface, ids.join(",")));
    }
    out
}

/// Parses and validates a word alignment; output is sorted by start frame.
pub fn parse_alignments(text: &str) -> Result<Vec<WordAlignment>, FormatError> {
    let mut words = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(FormatError::Parse {
                line,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let int = |s: &str, what: &str| {
            s.trim().parse::<i64>().map_err(|e| FormatError::Parse {
                line,
                message: format!("bad {what} {s:?}: {e}"),
            })
        };
        let start = int(fields[1], "start frame")?;
        let end = int(fields[2], "end frame")?;
        if start < 0 || end < start {
            return Err(FormatError::NegativeInterval { line, start, end });
        }
        let path_score = fields[3].trim().parse::<f64>().map_err(|e| FormatError::Parse {
            line,
            message: format!("bad path score {:?}: {e}", fields[3]),
        })?;
        words.push(WordAlignment {
            word: fields[0].to_string(),
            start_frame: start as usize,
            end_frame: end as usize,
            path_score,
        });
    }
    words.sort_by_key(|w| (w.start_frame, w.end_frame));
    for pair in words.windows(2) {
        if pair[0].end_frame >= pair[1].start_frame {
            return Err(FormatError::OverlappingWords {
                first: format!("{}[{},{}]", pair[0].word, pair[0].start_frame, pair[0].end_frame),
                second: format!("{}[{},{}]", pair[1].word, pair[1].start_frame, pair[1].end_frame),
            });
        }
    }
    Ok(words)
}

pub fn format_alignments(words: &[WordAlignment]) -> String {
    words
        .iter()
        .map(|w| format!("{}\t{}\t{}\t{}\n", w.word, w.start_frame, w.end_frame, w.path_score))
        .collect()
}

/// Cuts a matrix into chunks of `floor(chunk_ms / frame_ms)` frames; the last
/// chunk may be shorter.
pub fn chunker(
    matrix: &LogProbMatrix,
    chunk_ms: f64,
    frame_ms: f64,
) -> Result<Vec<LogProbMatrix>, FormatError> {
    let per_chunk = frames_per_chunk(chunk_ms, frame_ms)?;
    let mut out = Vec::with_capacity(matrix.frames().div_ceil(per_chunk));
    let mut at = 0;
    while at < matrix.frames() {
        let end = (at + per_chunk).min(matrix.frames());
        out.push(matrix.slice(at, end));
        at = end;
    }
    Ok(out)
}

pub fn frames_per_chunk(chunk_ms: f64, frame_ms: f64) -> Result<usize, FormatError> {
    let too_small = FormatError::ChunkTooSmall { chunk_ms, frame_ms };
    if !(chunk_ms > 0.0 && frame_ms > 0.0) {
        return Err(too_small);
    }
    // tolerate 1120 / 40 landing at 27.999...
    let n = (chunk_ms / frame_ms + 1e-9).floor() as usize;
    if n == 0 {
        return Err(too_small);
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvelopeRecord {
    Chunk { n_frames: usize, frames: String },
    End,
}

impl EnvelopeRecord {
    pub fn chunk(matrix: &LogProbMatrix) -> Self {
        let mut payload = Vec::with_capacity(matrix.values().len() * 4);
        for v in matrix.values() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        EnvelopeRecord::Chunk {
            n_frames: matrix.frames(),
            frames: BASE64.encode(payload),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope records always serialize")
    }

    pub fn parse_line(line: &str) -> Result<Self, FormatError> {
        serde_json::from_str(line.trim()).map_err(|e| FormatError::Envelope(e.to_string()))
    }

    /// Decodes a chunk payload. `vocab` pins the row width when known;
    /// otherwise it is inferred from the payload length.
    pub fn decode_chunk(&self, vocab: Option<usize>) -> Result<Option<LogProbMatrix>, FormatError> {
        let EnvelopeRecord::Chunk { n_frames, frames } = self else {
            return Ok(None);
        };
        let payload = BASE64
            .decode(frames.as_bytes())
            .map_err(|e| FormatError::Envelope(format!("bad base64: {e}")))?;
        if payload.len() % 4 != 0 {
            return Err(FormatError::Envelope(format!(
                "payload of {} bytes is not a whole number of f32 values",
                payload.len()
            )));
        }
        let values = f32s(&payload);
        let width = match (vocab, *n_frames) {
            (Some(v), _) => v,
            (None, 0) => {
                return Err(FormatError::Envelope(
                    "cannot infer vocabulary from an empty first chunk".into(),
                ))
            }
            (None, n) => values.len() / n,
        };
        if n_frames * width != values.len() {
            return Err(FormatError::Envelope(format!(
                "n_frames {n_frames} x vocab {width} x 4 != payload length {}",
                payload.len()
            )));
        }
        Ok(Some(LogProbMatrix::new(*n_frames, width, values)?))
    }
}

/// Writes a whole matrix as an envelope stream cut at `chunk_frames`.
pub fn write_envelope<W: Write>(
    out: &mut W,
    matrix: &LogProbMatrix,
    chunk_frames: usize,
) -> io::Result<()> {
    let mut at = 0;
    while at < matrix.frames() {
        let end = (at + chunk_frames.max(1)).min(matrix.frames());
        writeln!(out, "{}", EnvelopeRecord::chunk(&matrix.slice(at, end)).to_line())?;
        at = end;
    }
    writeln!(out, "{}", EnvelopeRecord::End.to_line())
}
