//! Byte-level BPE: lowest-rank pair first, leftmost on ties, one merge at a time.

use super::bytes::byte_to_char;
use super::{TokenizationResult, TokenizerSpec, WordBeginConvention};

const SP_MARKER: &str = "▁";

#[derive(Debug)]
struct Unit {
    symbol: String,
    start: usize,
    end: usize,
}

fn byte_units(input: &[u8]) -> Vec<Unit> {
    input
        .iter()
        .enumerate()
        .map(|(i, &b)| Unit {
            symbol: byte_to_char(b).to_string(),
            start: i,
            end: i + 1,
        })
        .collect()
}

fn char_units(spec: &TokenizerSpec, input: &str) -> Vec<Unit> {
    let mut units = Vec::with_capacity(input.len());
    for (i, ch) in input.char_indices() {
        let end = i + ch.len_utf8();
        let symbol = ch.to_string();
        let byte_tokens: Option<Vec<String>> = (!spec.vocab.contains_key(&symbol))
            .then(|| {
                input.as_bytes()[i..end]
                    .iter()
                    .map(|b| format!("<0x{b:02X}>"))
                    .map(|t| spec.vocab.contains_key(&t).then_some(t))
                    .collect()
            })
            .flatten();
        match byte_tokens {
            Some(tokens) => {
                for (k, t) in tokens.into_iter().enumerate() {
                    units.push(Unit {
                        symbol: t,
                        start: i + k,
                        end: i + k + 1,
                    });
                }
            }
            None => units.push(Unit { symbol, start: i, end }),
        }
    }
    units
}

fn merge_all(spec: &TokenizerSpec, units: &mut Vec<Unit>) {
    loop {
        let best = units
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| spec.merge_rank(&w[0].symbol, &w[1].symbol).map(|r| (r, i)))
            .min();
        let Some((_, i)) = best else { break };
        let right = units.remove(i + 1);
        let left = &mut units[i];
        left.symbol.push_str(&right.symbol);
        left.end = right.end;
    }
}

pub(super) fn encode(spec: &TokenizerSpec, word: &str, leading_space: bool) -> TokenizationResult {
    let (mut units, marker_len) = match spec.word_begin {
        WordBeginConvention::Gpt2ByteSpace if leading_space => {
            let mut input = Vec::with_capacity(word.len() + 1);
            input.push(b' ');
            input.extend_from_slice(word.as_bytes());
            (byte_units(&input), 1)
        }
        WordBeginConvention::SentencepieceUnderscore => {
            let input = if leading_space {
                format!("{SP_MARKER}{word}")
            } else {
                word.to_string()
            };
            let marker_len = if leading_space { SP_MARKER.len() } else { 0 };
            (char_units(spec, &input), marker_len)
        }
        _ => (byte_units(word.as_bytes()), 0),
    };
    merge_all(spec, &mut units);

    let mut tokens = Vec::with_capacity(units.len());
    let mut spans = Vec::with_capacity(units.len());
    for u in units {
        let end = u.end.saturating_sub(marker_len);
        if end == 0 {
            // marker left on its own covers no byte of the word
            continue;
        }
        spans.push((u.start.saturating_sub(marker_len), end));
        tokens.push(u.symbol);
    }
    TokenizationResult::new(word, tokens, spans).expect("BPE units tile the input")
}
