//! Greedy longest-match-first WordPiece.

use super::{TokenizationResult, TokenizerError, TokenizerSpec, UnknownPolicy};

pub(super) fn encode(spec: &TokenizerSpec, word: &str) -> Result<TokenizationResult, TokenizerError> {
    let char_ends: Vec<usize> = word.char_indices().map(|(i, c)| i + c.len_utf8()).collect();
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut piece = String::new();
    while start < word.len() {
        let mut matched = None;
        for &end in char_ends.iter().rev().take_while(|&&e| e > start) {
            piece.clear();
            if start > 0 {
                piece.push_str(&spec.continuation_marker);
            }
            piece.push_str(&word[start..end]);
            if spec.vocab.contains_key(piece.as_str()) {
                matched = Some(end);
                break;
            }
        }
        match matched {
            Some(end) => {
                tokens.push(piece.clone());
                spans.push((start, end));
                start = end;
            }
            None => match spec.unknown_policy {
                UnknownPolicy::Residue => {
                    tokens.push(spec.unk_token.clone());
                    spans.push((start, word.len()));
                    start = word.len();
                }
                UnknownPolicy::Fail => {
                    return Err(TokenizerError::Uncoverable {
                        word: word.to_string(),
                        residue: word[start..].to_string(),
                    })
                }
            },
        }
    }
    Ok(TokenizationResult::new(word, tokens, spans).expect("wordpiece spans tile the word"))
}
