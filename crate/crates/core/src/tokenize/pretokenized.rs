//! Results produced outside this crate, supplied as JSONL records
//! `{key, word, tokens, spans}` with byte spans over the bare word.

use std::collections::HashMap;
use std::io::{self, BufRead};

use serde::Deserialize;
use thiserror::Error;

use super::{SpanError, TokenizationResult};
use crate::gold::GoldItem;

#[derive(Debug, Error)]
pub enum PretokenizedError {
    #[error("record {record}: {message}")]
    Json { record: usize, message: String },
    #[error("record {record} (key `{key}`): {source}")]
    Spans {
        record: usize,
        key: String,
        #[source]
        source: SpanError,
    },
    #[error("record {record}: duplicate key `{key}`")]
    DuplicateKey { record: usize, key: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Deserialize)]
struct Record {
    key: String,
    word: String,
    tokens: Vec<String>,
    spans: Vec<(usize, usize)>,
}

/// Validated results keyed by occurrence (`sent_id#word_index`) or by the
/// word itself for type-level files.
#[derive(Debug, Clone, Default)]
pub struct PretokenizedSet {
    by_key: HashMap<String, TokenizationResult>,
}

impl PretokenizedSet {
    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&TokenizationResult> {
        self.by_key.get(key)
    }

    /// Finds the result for a gold item: occurrence key first, then the word.
    /// A result whose word differs from the item's is never returned.
    pub fn lookup(&self, item: &GoldItem) -> Option<&TokenizationResult> {
        self.by_key
            .get(&item.key())
            .or_else(|| self.by_key.get(&item.word))
            .filter(|r| r.word == item.word)
    }
}

pub fn ingest_pretokenized<R: BufRead>(source: R) -> Result<PretokenizedSet, PretokenizedError> {
    let mut set = PretokenizedSet::default();
    let mut record = 0;
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        record += 1;
        let rec: Record = serde_json::from_str(&line).map_err(|e| PretokenizedError::Json {
            record,
            message: e.to_string(),
        })?;
        let result =
            TokenizationResult::new(rec.word, rec.tokens, rec.spans).map_err(|source| PretokenizedError::Spans {
                record,
                key: rec.key.clone(),
                source,
            })?;
        if set.by_key.insert(rec.key.clone(), result).is_some() {
            return Err(PretokenizedError::DuplicateKey { record, key: rec.key });
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_covering_spans() {
        let src = r#"{"key":"s1#2","word":"books","tokens":["boo","ks"],"spans":[[0,3],[3,5]]}"#;
        let set = ingest_pretokenized(src.as_bytes()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get("s1#2").unwrap().boundary_offsets_bytes(), [3]);
    }

    #[test]
    fn gap_is_rejected() {
        let src = r#"{"key":"k","word":"books","tokens":["bo","ks"],"spans":[[0,2],[3,5]]}"#;
        match ingest_pretokenized(src.as_bytes()) {
            Err(PretokenizedError::Spans {
                record: 1,
                source: SpanError::Gap(2, 3),
                ..
            }) => {}
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let src = r#"{"key":"k","word":"books","tokens":["books"],"spans":[[0,3],[3,5]]}"#;
        assert!(matches!(
            ingest_pretokenized(src.as_bytes()),
            Err(PretokenizedError::Spans {
                source: SpanError::Arity { tokens: 1, spans: 2 },
                ..
            })
        ));
    }

    #[test]
    fn duplicate_key() {
        let line = r#"{"key":"k","word":"ab","tokens":["ab"],"spans":[[0,2]]}"#;
        let src = format!("{line}\n{line}\n");
        assert!(matches!(
            ingest_pretokenized(src.as_bytes()),
            Err(PretokenizedError::DuplicateKey { record: 2, .. })
        ));
    }
}
