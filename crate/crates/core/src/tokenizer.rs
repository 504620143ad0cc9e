//! Greedy longest-match tokenizer for bias phrases given only as text.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::TokenId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("no vocabulary piece matches {rest:?} in {text:?}")]
    NoMatch { text: String, rest: String },
}

/// Longest-match tokenizer over a piece vocabulary using the `▁` word-start
/// convention.
#[derive(Debug, Clone)]
pub struct GreedyTokenizer {
    pieces: HashMap<String, TokenId>,
    max_piece_chars: usize,
    marker: String,
}

impl GreedyTokenizer {
    pub fn new<S: AsRef<str>>(vocab: &[S], marker: &str) -> Self {
        let mut pieces = HashMap::new();
        let mut max_piece_chars = 0;
        for (id, piece) in vocab.iter().enumerate() {
            let piece = piece.as_ref();
            if piece.is_empty() {
                continue;
            }
            max_piece_chars = max_piece_chars.max(piece.chars().count());
            // first occurrence wins
            pieces.entry(piece.to_string()).or_insert(TokenId(id as u32));
        }
        Self {
            pieces,
            max_piece_chars,
            marker: marker.to_string(),
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, TokenizeError> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let marked: Vec<char> = format!("{}{}", self.marker, word).chars().collect();
            let mut at = 0;
            while at < marked.len() {
                let longest = (at + 1..=marked.len().min(at + self.max_piece_chars))
                    .rev()
                    .find_map(|end| {
                        let piece: String = marked[at..end].iter().collect();
                        self.pieces.get(&piece).map(|&id| (id, end))
                    });
                match longest {
                    Some((id, end)) => {
                        out.push(id);
                        at = end;
                    }
                    None => {
                        return Err(TokenizeError::NoMatch {
                            text: text.to_string(),
                            rest: marked[at..].iter().collect(),
                        })
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_wins() {
        let vocab = ["▁jus", "tin", "▁justin", "▁bie", "ber", "▁b", "i", "e", "<b>"];
        let tok = GreedyTokenizer::new(&vocab, "▁");
        let ids: Vec<u32> = tok
            .encode("justin bieber")
            .unwrap()
            .into_iter()
            .map(|t| t.0)
            .collect();
        assert_eq!(ids, [2, 3, 4]);
    }

    #[test]
    fn reports_unmatched_rest() {
        let tok = GreedyTokenizer::new(&["▁a"], "▁");
        assert!(matches!(tok.encode("ab"), Err(TokenizeError::NoMatch { rest, .. }) if rest == "b"));
    }
}
