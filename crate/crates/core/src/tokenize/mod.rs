//! Tokenization of gold words with byte spans over the bare word.
//!
//! Every [`TokenizationResult`] indexes into the UTF-8 bytes of the word
//! itself. Word-begin markers (`Ġ`, `▁`) prepended for encoding are stripped
//! from the spans again, so results from different engines are comparable.

mod bpe;
pub mod bytes;
mod pretokenized;
mod wordpiece;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use pretokenized::{ingest_pretokenized, PretokenizedError, PretokenizedSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    ByteBpe,
    Wordpiece,
    Pretokenized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordBeginConvention {
    /// Byte-level alphabet; a leading space is the byte `0x20` (`Ġ`).
    Gpt2ByteSpace,
    /// Character alphabet with `▁` for a leading space and `<0xXX>` byte
    /// fallback for characters outside the vocabulary.
    SentencepieceUnderscore,
    /// Byte-level alphabet without a word-begin marker.
    None,
}

/// What WordPiece does when no vocabulary entry matches the rest of a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Emit the unknown token spanning the whole remaining residue.
    #[default]
    Residue,
    Fail,
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("tokenizer has no vocabulary")]
    MissingVocabulary,
    #[error("merge {rank} (`{left} {right}`): `{symbol}` is not in the vocabulary")]
    MergeSymbolMissing {
        rank: usize,
        left: String,
        right: String,
        symbol: String,
    },
    #[error("merges line {line}: expected two space-separated symbols, found `{text}`")]
    BadMergeLine { line: usize, text: String },
    #[error("invalid tokenizer definition: {0}")]
    Definition(String),
    #[error("cannot tokenize an empty word")]
    EmptyWord,
    #[error("wordpiece cannot cover `{residue}` in `{word}`")]
    Uncoverable { word: String, residue: String },
    #[error("tokenizer `{0}` is pre-tokenized; use the ingested results instead")]
    NotAnEngine(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct TokenizerSpec {
    pub name: String,
    pub kind: TokenizerKind,
    pub vocab: HashMap<String, u32>,
    /// Pair rules in priority order (rank 0 first).
    pub merges: Vec<(String, String)>,
    pub continuation_marker: String,
    pub word_begin: WordBeginConvention,
    pub unknown_policy: UnknownPolicy,
    pub unk_token: String,
    merge_ranks: HashMap<String, HashMap<String, usize>>,
}

impl TokenizerSpec {
    pub fn byte_bpe(
        name: impl Into<String>,
        vocab: HashMap<String, u32>,
        merges: Vec<(String, String)>,
        word_begin: WordBeginConvention,
    ) -> Result<Self, TokenizerError> {
        Self::new(name.into(), TokenizerKind::ByteBpe, vocab, merges, word_begin)
    }

    pub fn wordpiece(
        name: impl Into<String>,
        vocab: HashMap<String, u32>,
        continuation_marker: impl Into<String>,
    ) -> Result<Self, TokenizerError> {
        let mut spec = Self::new(
            name.into(),
            TokenizerKind::Wordpiece,
            vocab,
            Vec::new(),
            WordBeginConvention::None,
        )?;
        spec.continuation_marker = continuation_marker.into();
        Ok(spec)
    }

    /// A named placeholder for results ingested from a pre-tokenized file.
    pub fn pretokenized(name: impl Into<String>) -> Self {
        TokenizerSpec {
            name: name.into(),
            kind: TokenizerKind::Pretokenized,
            vocab: HashMap::new(),
            merges: Vec::new(),
            continuation_marker: "##".into(),
            word_begin: WordBeginConvention::None,
            unknown_policy: UnknownPolicy::Residue,
            unk_token: "[UNK]".into(),
            merge_ranks: HashMap::new(),
        }
    }

    fn new(
        name: String,
        kind: TokenizerKind,
        vocab: HashMap<String, u32>,
        merges: Vec<(String, String)>,
        word_begin: WordBeginConvention,
    ) -> Result<Self, TokenizerError> {
        if vocab.is_empty() {
            return Err(TokenizerError::MissingVocabulary);
        }
        let mut merge_ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (rank, (left, right)) in merges.iter().enumerate() {
            let joined = format!("{left}{right}");
            for symbol in [left, right, &joined] {
                if !vocab.contains_key(symbol.as_str()) {
                    return Err(TokenizerError::MergeSymbolMissing {
                        rank,
                        left: left.clone(),
                        right: right.clone(),
                        symbol: symbol.clone(),
                    });
                }
            }
            // keep the first rank if a rule is listed twice
            merge_ranks
                .entry(left.clone())
                .or_default()
                .entry(right.clone())
                .or_insert(rank);
        }
        Ok(TokenizerSpec {
            name,
            kind,
            vocab,
            merges,
            continuation_marker: "##".into(),
            word_begin,
            unknown_policy: UnknownPolicy::Residue,
            unk_token: "[UNK]".into(),
            merge_ranks,
        })
    }

    pub(crate) fn merge_rank(&self, left: &str, right: &str) -> Option<usize> {
        self.merge_ranks.get(left)?.get(right).copied()
    }

    pub fn with_unknown_policy(mut self, policy: UnknownPolicy) -> Self {
        self.unknown_policy = policy;
        self
    }

    /// Tokenizes one word. With `leading_space` set, BPE conventions that
    /// have a word-begin marker encode the word as if preceded by a space.
    pub fn tokenize_word(&self, word: &str, leading_space: bool) -> Result<TokenizationResult, TokenizerError> {
        if word.is_empty() {
            return Err(TokenizerError::EmptyWord);
        }
        match self.kind {
            TokenizerKind::ByteBpe => Ok(bpe::encode(self, word, leading_space)),
            TokenizerKind::Wordpiece => wordpiece::encode(self, word),
            TokenizerKind::Pretokenized => Err(TokenizerError::NotAnEngine(self.name.clone())),
        }
    }
}

/// Tokens of one word with half-open byte spans over the bare word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizationResult {
    pub word: String,
    pub tokens: Vec<String>,
    pub spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("{tokens} tokens but {spans} spans")]
    Arity { tokens: usize, spans: usize },
    #[error("no tokens")]
    Empty,
    #[error("first span starts at {0}, expected 0")]
    BadStart(usize),
    #[error("gap between byte {0} and {1}")]
    Gap(usize, usize),
    #[error("overlap: span starts at {1} before previous end {0}")]
    Overlap(usize, usize),
    #[error("empty span at {0}")]
    EmptySpan(usize),
    #[error("spans end at {end}, word has {len} bytes")]
    Coverage { end: usize, len: usize },
}

impl TokenizationResult {
    /// Builds a result after checking that the spans tile the word exactly.
    pub fn new(word: impl Into<String>, tokens: Vec<String>, spans: Vec<(usize, usize)>) -> Result<Self, SpanError> {
        let word = word.into();
        if tokens.len() != spans.len() {
            return Err(SpanError::Arity {
                tokens: tokens.len(),
                spans: spans.len(),
            });
        }
        if spans.is_empty() {
            return Err(SpanError::Empty);
        }
        if spans[0].0 != 0 {
            return Err(SpanError::BadStart(spans[0].0));
        }
        let mut prev_end = 0;
        for &(s, e) in &spans {
            if s > prev_end {
                return Err(SpanError::Gap(prev_end, s));
            }
            if s < prev_end {
                return Err(SpanError::Overlap(prev_end, s));
            }
            if e <= s {
                return Err(SpanError::EmptySpan(s));
            }
            prev_end = e;
        }
        if prev_end != word.len() {
            return Err(SpanError::Coverage {
                end: prev_end,
                len: word.len(),
            });
        }
        Ok(TokenizationResult { word, tokens, spans })
    }

    /// Splits `word` at the given byte offsets; token strings are the raw
    /// byte slices, lossily decoded when an offset falls inside a character.
    pub fn from_byte_cuts(word: &str, cuts: &[usize]) -> Result<Self, SpanError> {
        let mut spans = Vec::with_capacity(cuts.len() + 1);
        let mut start = 0;
        for &c in cuts.iter().chain(std::iter::once(&word.len())) {
            spans.push((start, c));
            start = c;
        }
        let tokens = spans
            .iter()
            .map(|&(s, e)| String::from_utf8_lossy(word.as_bytes().get(s..e).unwrap_or_default()).into_owned())
            .collect();
        Self::new(word, tokens, spans)
    }

    /// One token per character.
    pub fn per_char(word: &str) -> Self {
        let cuts: Vec<usize> = word.char_indices().skip(1).map(|(i, _)| i).collect();
        Self::from_byte_cuts(word, &cuts).expect("char offsets tile the word")
    }

    /// One token per UTF-8 byte.
    pub fn per_byte(word: &str) -> Self {
        let cuts: Vec<usize> = (1..word.len()).collect();
        Self::from_byte_cuts(word, &cuts).expect("byte offsets tile the word")
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Internal byte positions shared by adjacent spans.
    pub fn boundary_offsets_bytes(&self) -> Vec<usize> {
        self.spans[..self.spans.len() - 1].iter().map(|s| s.1).collect()
    }
}

fn parse_vocab(value: &Value) -> Result<HashMap<String, u32>, TokenizerError> {
    match value {
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| {
                v.as_u64()
                    .map(|id| (k.clone(), id as u32))
                    .ok_or_else(|| TokenizerError::Definition(format!("vocab id for `{k}` is not an integer")))
            })
            .collect(),
        // plain token list, or unigram-style [token, score] pairs
        Value::Array(entries) => entries
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let tok = match e {
                    Value::String(s) => Some(s.clone()),
                    Value::Array(pair) => pair.first().and_then(|t| t.as_str()).map(str::to_string),
                    _ => None,
                };
                tok.map(|t| (t, id as u32))
                    .ok_or_else(|| TokenizerError::Definition(format!("vocab entry {id} is not a token")))
            })
            .collect(),
        _ => Err(TokenizerError::Definition("vocab must be an object or array".into())),
    }
}

fn parse_merge_entry(idx: usize, entry: &Value) -> Result<(String, String), TokenizerError> {
    match entry {
        Value::String(s) => parse_merge_line(idx + 1, s)?.ok_or_else(|| TokenizerError::BadMergeLine {
            line: idx + 1,
            text: s.clone(),
        }),
        Value::Array(pair) if pair.len() == 2 => match (pair[0].as_str(), pair[1].as_str()) {
            (Some(a), Some(b)) => Ok((a.to_string(), b.to_string())),
            _ => Err(TokenizerError::BadMergeLine {
                line: idx + 1,
                text: entry.to_string(),
            }),
        },
        _ => Err(TokenizerError::BadMergeLine {
            line: idx + 1,
            text: entry.to_string(),
        }),
    }
}

fn parse_merge_line(line_no: usize, line: &str) -> Result<Option<(String, String)>, TokenizerError> {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    if trimmed.trim().is_empty() || trimmed.starts_with("#version") {
        return Ok(None);
    }
    let parts: Vec<&str> = trimmed.split(' ').collect();
    match parts.as_slice() {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok(Some((a.to_string(), b.to_string()))),
        _ => Err(TokenizerError::BadMergeLine {
            line: line_no,
            text: trimmed.to_string(),
        }),
    }
}

/// Parses a merges file. `#` lines before the first rule are a header unless
/// they are themselves a valid two-symbol rule.
fn parse_merges_text(text: &str) -> Result<Vec<(String, String)>, TokenizerError> {
    let mut merges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match parse_merge_line(i + 1, line) {
            Ok(Some(pair)) => merges.push(pair),
            Ok(None) => {}
            Err(_) if merges.is_empty() && line.starts_with('#') => {}
            Err(e) => return Err(e),
        }
    }
    Ok(merges)
}

fn detect_convention(vocab: &HashMap<String, u32>) -> WordBeginConvention {
    if vocab.keys().any(|k| k.starts_with('Ġ')) {
        WordBeginConvention::Gpt2ByteSpace
    } else if vocab.keys().any(|k| k.starts_with('▁')) {
        WordBeginConvention::SentencepieceUnderscore
    } else {
        WordBeginConvention::None
    }
}

fn parse_convention(s: &str) -> Result<WordBeginConvention, TokenizerError> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| TokenizerError::Definition(format!("unknown word_begin_convention `{s}`")))
}

/// Loads a JSON tokenizer definition: either a `tokenizer.json`-style file
/// with a `model` object, or a flat `{vocab, merges}` object. Optional
/// top-level `name`, `kind` and `word_begin_convention` override detection.
pub fn load_tokenizer_json(text: &str, default_name: &str) -> Result<TokenizerSpec, TokenizerError> {
    let root: Value = serde_json::from_str(text).map_err(|e| TokenizerError::Definition(e.to_string()))?;
    let model = root.get("model").filter(|m| m.is_object()).unwrap_or(&root);
    let vocab = match model.get("vocab") {
        Some(v) => parse_vocab(v)?,
        None => return Err(TokenizerError::MissingVocabulary),
    };
    let merges = match model.get("merges") {
        Some(Value::Array(entries)) => entries
            .iter()
            .enumerate()
            .map(|(i, e)| parse_merge_entry(i, e))
            .collect::<Result<Vec<_>, _>>()?,
        Some(Value::Null) | None => Vec::new(),
        Some(_) => return Err(TokenizerError::Definition("merges must be an array".into())),
    };
    let model_type = model.get("type").and_then(Value::as_str).map(str::to_ascii_lowercase);
    let explicit_kind = root.get("kind").and_then(Value::as_str);
    let kind = match (explicit_kind, model_type.as_deref()) {
        (Some("wordpiece"), _) | (None, Some("wordpiece")) => TokenizerKind::Wordpiece,
        (Some("byte_bpe"), _) | (None, Some("bpe")) => TokenizerKind::ByteBpe,
        (Some(other), _) => return Err(TokenizerError::Definition(format!("unsupported kind `{other}`"))),
        (None, Some(other)) if other != "bpe" => {
            return Err(TokenizerError::Definition(format!("unsupported model type `{other}`")))
        }
        _ if !merges.is_empty() => TokenizerKind::ByteBpe,
        _ if vocab.keys().any(|k| k.starts_with("##")) => TokenizerKind::Wordpiece,
        _ => TokenizerKind::ByteBpe,
    };
    let name = root
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or(default_name)
        .to_string();
    let word_begin = match root.get("word_begin_convention").and_then(Value::as_str) {
        Some(s) => parse_convention(s)?,
        None => detect_convention(&vocab),
    };
    match kind {
        TokenizerKind::Wordpiece => {
            let marker = model
                .get("continuing_subword_prefix")
                .and_then(Value::as_str)
                .unwrap_or("##");
            let mut spec = TokenizerSpec::wordpiece(name, vocab, marker)?;
            if let Some(unk) = model.get("unk_token").and_then(Value::as_str) {
                spec.unk_token = unk.to_string();
            }
            Ok(spec)
        }
        _ => TokenizerSpec::byte_bpe(name, vocab, merges, word_begin),
    }
}

/// Loads a vocabulary file (`vocab.txt` with one token per line, or a JSON
/// token→id object) plus an optional `merges.txt`. Without merges the result
/// is a WordPiece spec.
pub fn load_tokenizer_files(
    vocab_text: &str,
    merges_text: Option<&str>,
    name: &str,
) -> Result<TokenizerSpec, TokenizerError> {
    let vocab: HashMap<String, u32> = if vocab_text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(vocab_text).map_err(|e| TokenizerError::Definition(e.to_string()))?;
        parse_vocab(&v)?
    } else {
        vocab_text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| (l.to_string(), i as u32))
            .collect()
    };
    match merges_text {
        Some(text) => {
            let merges = parse_merges_text(text)?;
            let convention = detect_convention(&vocab);
            TokenizerSpec::byte_bpe(name, vocab, merges, convention)
        }
        None => TokenizerSpec::wordpiece(name, vocab, "##"),
    }
}

/// Loads a tokenizer from disk. `.json` files are JSON definitions; any other
/// file is a vocabulary, paired with `merges` when given.
pub fn load_tokenizer(path: &Path, merges: Option<&Path>, name: &str) -> Result<TokenizerSpec, TokenizerError> {
    let text = fs::read_to_string(path)?;
    match merges {
        Some(m) => load_tokenizer_files(&text, Some(&fs::read_to_string(m)?), name),
        None if path.extension().is_some_and(|e| e == "json") => load_tokenizer_json(&text, name),
        None => load_tokenizer_files(&text, None, name),
    }
}
