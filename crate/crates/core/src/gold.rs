//! Gold segmentations derived from (wordform, lemma) pairs.
//!
//! The stem is an occurrence of the whole lemma inside the wordform; whatever
//! precedes it is the prefix and whatever follows is the suffix. Items whose
//! wordform cannot be recomposed this way are rejected, which filters out
//! suppletion, umlaut and non-concatenative morphology.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::conllu::{Split, UdSentence};

/// Datasets with fewer items than this are never scoreable.
pub const MIN_SCOREABLE_ITEMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMode {
    #[default]
    Sensitive,
    /// Lowercase both word and lemma before searching for the stem.
    Insensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub case: CaseMode,
}

impl MatchPolicy {
    pub fn case_insensitive() -> Self {
        MatchPolicy {
            case: CaseMode::Insensitive,
        }
    }
}

/// What the `frequency` field counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyUnit {
    /// Occurrences of the exact wordform.
    #[default]
    Wordform,
    /// Occurrences of the item's lemma.
    Lemma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    SingleMorpheme,
    LemmaNotSubstring,
    IdenticalAfterNormalization,
    /// FORM or LEMMA is `_`.
    MissingAnnotation,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rejection::SingleMorpheme => "single_morpheme",
            Rejection::LemmaNotSubstring => "lemma_not_substring",
            Rejection::IdenticalAfterNormalization => "identical_after_normalization",
            Rejection::MissingAnnotation => "missing_annotation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub morphemes: Vec<String>,
    pub stem_index: usize,
    /// Character offsets of the internal morpheme boundaries.
    pub boundaries: Vec<usize>,
    /// The lemma occurs more than once in the word; the leftmost was used.
    pub ambiguous: bool,
}

impl Segmentation {
    pub fn stem(&self) -> &str {
        &self.morphemes[self.stem_index]
    }
}

/// Splits `word` into (prefix, stem, suffix) around the leftmost occurrence of
/// `lemma`. Empty affixes are dropped, so the result has two or three parts.
pub fn propose_segmentation(word: &str, lemma: &str, policy: MatchPolicy) -> Result<Segmentation, Rejection> {
    if word.is_empty() || lemma.is_empty() {
        return Err(Rejection::MissingAnnotation);
    }
    if word == lemma {
        return Err(Rejection::SingleMorpheme);
    }

    // fold maps each original char start to its offset in the folded string
    let (folded_word, starts) = fold(word, policy.case);
    let (folded_lemma, _) = fold(lemma, policy.case);
    if folded_word == folded_lemma {
        return Err(Rejection::IdenticalAfterNormalization);
    }

    let mut occurrences = starts.iter().enumerate().filter_map(|(ci, &(fo, ob))| {
        if !folded_word[fo..].starts_with(folded_lemma.as_str()) {
            return None;
        }
        let end = fo + folded_lemma.len();
        starts[ci..]
            .iter()
            .find(|(f, _)| *f == end)
            .map(|&(_, end_ob)| (ob, end_ob))
    });
    let (start, end) = occurrences.next().ok_or(Rejection::LemmaNotSubstring)?;
    let ambiguous = occurrences.next().is_some();

    let mut morphemes = Vec::with_capacity(3);
    let mut boundaries = Vec::with_capacity(2);
    let mut stem_index = 0;
    let prefix = &word[..start];
    let stem = &word[start..end];
    let suffix = &word[end..];
    if !prefix.is_empty() {
        morphemes.push(prefix.to_string());
        boundaries.push(prefix.chars().count());
        stem_index = 1;
    }
    morphemes.push(stem.to_string());
    if !suffix.is_empty() {
        boundaries.push(word[..end].chars().count());
        morphemes.push(suffix.to_string());
    }
    if morphemes.len() < 2 {
        return Err(Rejection::IdenticalAfterNormalization);
    }
    Ok(Segmentation {
        morphemes,
        stem_index,
        boundaries,
        ambiguous,
    })
}

/// Returns the folded string and, for every char start of `s` plus the end,
/// the pair (offset in folded string, offset in `s`).
fn fold(s: &str, case: CaseMode) -> (String, Vec<(usize, usize)>) {
    let mut out = String::with_capacity(s.len());
    let mut starts = Vec::with_capacity(s.len() + 1);
    for (ob, ch) in s.char_indices() {
        starts.push((out.len(), ob));
        match case {
            CaseMode::Sensitive => out.push(ch),
            CaseMode::Insensitive => out.extend(ch.to_lowercase()),
        }
    }
    starts.push((out.len(), s.len()));
    (out, starts)
}

/// One gold item. Field order is the on-disk record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldItem {
    pub language: String,
    pub script: String,
    pub treebank: String,
    pub split: Split,
    pub sent_id: String,
    pub word_index: u32,
    pub word: String,
    pub lemma: String,
    pub morphemes: Vec<String>,
    /// Character offsets strictly inside the word.
    pub boundaries: Vec<usize>,
    pub upos: String,
    pub feats: BTreeMap<String, String>,
    pub sentence: String,
    pub reconstructed: bool,
    pub frequency: u64,
}

impl GoldItem {
    /// Occurrence key used to join pre-tokenized output.
    pub fn key(&self) -> String {
        format!("{}#{}", self.sent_id, self.word_index)
    }

    /// Half-open byte spans of the morphemes within the word.
    pub fn morpheme_byte_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.morphemes.len());
        let mut start = 0;
        for m in &self.morphemes {
            spans.push((start, start + m.len()));
            start += m.len();
        }
        spans
    }

    /// Internal boundaries as byte offsets into the word.
    pub fn boundary_bytes(&self) -> Vec<usize> {
        let spans = self.morpheme_byte_spans();
        spans[..spans.len() - 1].iter().map(|s| s.1).collect()
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        let n = self.morphemes.len();
        if !(2..=3).contains(&n) {
            return Err(("morphemes", format!("expected 2 or 3 morphemes, found {n}")));
        }
        if self.morphemes.iter().any(|m| m.is_empty()) {
            return Err(("morphemes", "empty morpheme".into()));
        }
        if self.morphemes.concat() != self.word {
            return Err(("morphemes", "morphemes do not concatenate to word".into()));
        }
        let mut expected = Vec::with_capacity(n - 1);
        let mut acc = 0;
        for m in &self.morphemes[..n - 1] {
            acc += m.chars().count();
            expected.push(acc);
        }
        if self.boundaries != expected {
            return Err((
                "boundaries",
                format!("expected {expected:?}, found {:?}", self.boundaries),
            ));
        }
        if self.frequency == 0 {
            return Err(("frequency", "frequency must be positive".into()));
        }
        if self.word.is_empty() {
            return Err(("word", "empty word".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<Rejection, usize>,
    /// Accepted items whose lemma occurs more than once in the word.
    pub ambiguous_stem: usize,
}

impl BuildStats {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageMeta {
    pub language: String,
    pub script: String,
    pub treebank: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub policy: MatchPolicy,
    pub frequency_unit: FrequencyUnit,
    pub min_items: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            policy: MatchPolicy::default(),
            frequency_unit: FrequencyUnit::default(),
            min_items: MIN_SCOREABLE_ITEMS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageDataset {
    pub language: String,
    pub script: String,
    pub treebank_name: String,
    pub items: Vec<GoldItem>,
    pub stats: BuildStats,
    pub options: BuildOptions,
    pub scoreable: bool,
}

/// Builds the gold items of one treebank. Frequencies are counted over every
/// token of `sentences` before any filtering.
pub fn build_dataset(sentences: &[UdSentence], meta: &LanguageMeta, options: BuildOptions) -> LanguageDataset {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for tok in sentences.iter().flat_map(|s| &s.tokens) {
        let key = match options.frequency_unit {
            FrequencyUnit::Wordform => tok.form.as_str(),
            FrequencyUnit::Lemma => tok.lemma.as_str(),
        };
        *counts.entry(key).or_default() += 1;
    }

    let mut stats = BuildStats::default();
    let mut items = Vec::new();
    for sentence in sentences {
        for tok in &sentence.tokens {
            stats.candidates += 1;
            let seg = if tok.form == "_" || tok.lemma == "_" {
                Err(Rejection::MissingAnnotation)
            } else {
                propose_segmentation(&tok.form, &tok.lemma, options.policy)
            };
            let seg = match seg {
                Ok(seg) => seg,
                Err(reason) => {
                    *stats.rejected.entry(reason).or_default() += 1;
                    continue;
                }
            };
            stats.accepted += 1;
            if seg.ambiguous {
                stats.ambiguous_stem += 1;
            }
            let freq_key = match options.frequency_unit {
                FrequencyUnit::Wordform => tok.form.as_str(),
                FrequencyUnit::Lemma => tok.lemma.as_str(),
            };
            items.push(GoldItem {
                language: meta.language.clone(),
                script: meta.script.clone(),
                treebank: meta.treebank.clone(),
                split: sentence.split.unwrap_or(Split::Train),
                sent_id: sentence.sent_id.clone(),
                word_index: tok.id,
                word: tok.form.clone(),
                lemma: tok.lemma.clone(),
                morphemes: seg.morphemes,
                boundaries: seg.boundaries,
                upos: tok.upos.clone(),
                feats: tok.feats.clone(),
                sentence: sentence.text.clone(),
                reconstructed: sentence.reconstructed,
                frequency: counts[freq_key],
            });
        }
    }
    let scoreable = items.len() >= options.min_items.max(MIN_SCOREABLE_ITEMS);
    LanguageDataset {
        language: meta.language.clone(),
        script: meta.script.clone(),
        treebank_name: meta.treebank.clone(),
        items,
        stats,
        options,
        scoreable,
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {record}: field `{field}`: {message}")]
    Schema {
        record: usize,
        field: String,
        message: String,
    },
    #[error("record {record}: {message}")]
    Malformed { record: usize, message: String },
    #[error("dataset has no records and no stats sidecar to describe it")]
    MissingHeader,
    #[error("invalid stats sidecar: {0}")]
    Sidecar(serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Sidecar written next to the JSONL records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub language: String,
    pub script: String,
    pub treebank: String,
    pub n_items: usize,
    pub scoreable: bool,
    pub options: BuildOptions,
    pub stats: BuildStats,
}

impl LanguageDataset {
    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            language: self.language.clone(),
            script: self.script.clone(),
            treebank: self.treebank_name.clone(),
            n_items: self.items.len(),
            scoreable: self.scoreable,
            options: self.options,
            stats: self.stats.clone(),
        }
    }
}

/// Writes one JSON record per item, no header line. Returns bytes written.
pub fn write_dataset<W: Write>(dataset: &LanguageDataset, mut sink: W) -> io::Result<usize> {
    let mut written = 0;
    for item in &dataset.items {
        let mut line = serde_json::to_vec(item).map_err(io::Error::other)?;
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len();
    }
    sink.flush()?;
    Ok(written)
}

pub fn write_header<W: Write>(dataset: &LanguageDataset, mut sink: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut sink, &dataset.header()).map_err(io::Error::other)?;
    sink.write_all(b"\n")?;
    sink.flush()
}

pub fn read_header<R: io::Read>(source: R) -> Result<DatasetHeader, DatasetError> {
    serde_json::from_reader(source).map_err(DatasetError::Sidecar)
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str, record: usize) -> Result<T, DatasetError> {
    let value = obj.get(name).ok_or_else(|| DatasetError::Schema {
        record,
        field: name.to_string(),
        message: "missing".into(),
    })?;
    serde_json::from_value(value.clone()).map_err(|e| DatasetError::Schema {
        record,
        field: name.to_string(),
        message: e.to_string(),
    })
}

fn parse_record(line: &str, record: usize) -> Result<GoldItem, DatasetError> {
    let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
        record,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(DatasetError::Malformed {
            record,
            message: "record is not a JSON object".into(),
        });
    };
    let item = GoldItem {
        language: field(&obj, "language", record)?,
        script: field(&obj, "script", record)?,
        treebank: field(&obj, "treebank", record)?,
        split: field(&obj, "split", record)?,
        sent_id: field(&obj, "sent_id", record)?,
        word_index: field(&obj, "word_index", record)?,
        word: field(&obj, "word", record)?,
        lemma: field(&obj, "lemma", record)?,
        morphemes: field(&obj, "morphemes", record)?,
        boundaries: field(&obj, "boundaries", record)?,
        upos: field(&obj, "upos", record)?,
        feats: field(&obj, "feats", record)?,
        sentence: field(&obj, "sentence", record)?,
        reconstructed: field(&obj, "reconstructed", record)?,
        frequency: field(&obj, "frequency", record)?,
    };
    item.validate().map_err(|(field, message)| DatasetError::Schema {
        record,
        field: field.to_string(),
        message,
    })?;
    Ok(item)
}

/// Reads JSONL records (1-based record numbers in errors). Language metadata
/// comes from the sidecar when given, otherwise from the first record.
pub fn read_dataset<R: BufRead>(source: R, header: Option<DatasetHeader>) -> Result<LanguageDataset, DatasetError> {
    let mut items = Vec::new();
    let mut record = 0;
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        record += 1;
        items.push(parse_record(&line, record)?);
    }
    let header = match header {
        Some(h) => h,
        None => {
            let first = items.first().ok_or(DatasetError::MissingHeader)?;
            let n = items.len();
            DatasetHeader {
                language: first.language.clone(),
                script: first.script.clone(),
                treebank: first.treebank.clone(),
                n_items: n,
                scoreable: n >= MIN_SCOREABLE_ITEMS,
                options: BuildOptions::default(),
                stats: BuildStats {
                    candidates: n,
                    accepted: n,
                    ..BuildStats::default()
                },
            }
        }
    };
    Ok(LanguageDataset {
        language: header.language,
        script: header.script,
        treebank_name: header.treebank,
        items,
        stats: header.stats,
        options: header.options,
        scoreable: header.scoreable,
    })
}
