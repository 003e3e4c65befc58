//! CoNLL-U reading.
//!
//! Only the columns needed to derive segmentations are kept (ID, FORM, LEMMA,
//! UPOS, FEATS, MISC). Multiword-token ranges (`3-4`) and empty nodes (`5.1`)
//! are skipped; the syntactic words inside a range are kept because lemmas
//! attach to them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Treebank split a sentence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// Infers the split from a UD file name such as `en_ewt-ud-train.conllu`.
    pub fn from_file_name(name: &str) -> Option<Split> {
        let stem = name.strip_suffix(".conllu")?;
        let last = stem.rsplit(['-', '_', '.']).next()?;
        last.parse().ok()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One syntactic word row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdToken {
    pub id: u32,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub feats: BTreeMap<String, String>,
    pub misc: String,
}

impl UdToken {
    /// Renders the token as a 10-column CoNLL-U row. Columns that are not
    /// retained are written as `_`.
    pub fn to_conllu_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t_\t{}\t_\t_\t_\t{}",
            self.id,
            self.form,
            self.lemma,
            self.upos,
            encode_feats(&self.feats),
            self.misc
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdSentence {
    pub sent_id: String,
    pub text: String,
    /// True when `text` was rebuilt from the word forms because the
    /// `# text =` comment was missing.
    pub reconstructed: bool,
    /// Comment lines without the leading `#`, in file order.
    pub comments: Vec<String>,
    pub tokens: Vec<UdToken>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowErrorKind {
    #[error("expected 10 tab-separated columns, found {0}")]
    ColumnCount(usize),
    #[error("invalid word id `{0}`")]
    BadId(String),
    #[error("word id {id} does not follow {prev}")]
    NonIncreasingId { prev: u32, id: u32 },
    #[error("empty {0} column")]
    EmptyColumn(&'static str),
    #[error("malformed feature `{0}`")]
    BadFeature(String),
}

/// A malformed row, located by its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct RowError {
    pub line: usize,
    pub kind: RowErrorKind,
}

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<ConlluError>,
    },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("empty treebank: no .conllu file for splits [{splits}] in {dir}")]
    EmptyTreebank { dir: PathBuf, splits: String },
}

/// How malformed rows are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort at the first malformed row.
    Strict,
    /// Skip malformed rows and record them.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedConllu {
    pub sentences: Vec<UdSentence>,
    /// Rows dropped in lenient mode.
    pub skipped: Vec<RowError>,
}

impl ParsedConllu {
    pub fn skipped_rows(&self) -> usize {
        self.skipped.len()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}

pub fn parse_feats(raw: &str) -> Result<BTreeMap<String, String>, RowErrorKind> {
    let mut feats = BTreeMap::new();
    if raw == "_" {
        return Ok(feats);
    }
    for pair in raw.split('|') {
        match pair.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                feats.insert(k.to_string(), v.to_string());
            }
            _ => return Err(RowErrorKind::BadFeature(pair.to_string())),
        }
    }
    Ok(feats)
}

pub fn encode_feats(feats: &BTreeMap<String, String>) -> String {
    if feats.is_empty() {
        return "_".to_string();
    }
    feats
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("|")
}

enum Row {
    Word(UdToken),
    Skipped,
}

fn parse_row(line: &str, prev_id: Option<u32>) -> Result<Row, RowErrorKind> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(RowErrorKind::ColumnCount(cols.len()));
    }
    let raw_id = cols[0];
    if raw_id.contains('-') || raw_id.contains('.') {
        let ok = raw_id
            .split(['-', '.'])
            .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
        return if ok {
            Ok(Row::Skipped)
        } else {
            Err(RowErrorKind::BadId(raw_id.to_string()))
        };
    }
    let id: u32 = raw_id
        .parse()
        .ok()
        .filter(|&id| id > 0)
        .ok_or_else(|| RowErrorKind::BadId(raw_id.to_string()))?;
    if let Some(prev) = prev_id {
        if id <= prev {
            return Err(RowErrorKind::NonIncreasingId { prev, id });
        }
    }
    for (idx, name) in [(1, "FORM"), (2, "LEMMA"), (3, "UPOS")] {
        if cols[idx].is_empty() {
            return Err(RowErrorKind::EmptyColumn(name));
        }
    }
    Ok(Row::Word(UdToken {
        id,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        feats: parse_feats(cols[5])?,
        misc: cols[9].to_string(),
    }))
}

#[derive(Default)]
struct SentenceBuilder {
    comments: Vec<String>,
    tokens: Vec<UdToken>,
    has_rows: bool,
}

impl SentenceBuilder {
    fn is_empty(&self) -> bool {
        self.comments.is_empty() && !self.has_rows
    }

    fn finish(self, ordinal: usize) -> UdSentence {
        let mut sent_id = None;
        let mut text = None;
        for c in &self.comments {
            if let Some((key, value)) = c.split_once('=') {
                match key.trim() {
                    "sent_id" if sent_id.is_none() => sent_id = Some(value.trim().to_string()),
                    "text" if text.is_none() => text = Some(value.trim().to_string()),
                    _ => {}
                }
            }
        }
        let reconstructed = text.is_none();
        let text = text.unwrap_or_else(|| {
            self.tokens
                .iter()
                .map(|t| t.form.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        });
        UdSentence {
            sent_id: sent_id.unwrap_or_else(|| format!("#{ordinal}")),
            text,
            reconstructed,
            comments: self.comments,
            tokens: self.tokens,
            split: None,
        }
    }
}

/// Parses CoNLL-U from a reader. Sentences without a `# sent_id` comment get
/// `#N`, their 1-based position in the input.
pub fn parse_conllu<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParsedConllu, ConlluError> {
    let mut out = ParsedConllu::default();
    let mut current = SentenceBuilder::default();
    let flush = |current: &mut SentenceBuilder, out: &mut ParsedConllu| {
        let done = std::mem::take(current);
        if !done.is_empty() {
            let ordinal = out.sentences.len() + 1;
            out.sentences.push(done.finish(ordinal));
        }
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let mut line = line.trim_end_matches('\r');
        if line_no == 1 {
            line = line.trim_start_matches('\u{feff}');
        }
        if line.trim().is_empty() {
            flush(&mut current, &mut out);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            current.comments.push(comment.trim().to_string());
            continue;
        }
        let prev = current.tokens.last().map(|t| t.id);
        match parse_row(line, prev) {
            Ok(Row::Word(tok)) => {
                current.has_rows = true;
                current.tokens.push(tok);
            }
            Ok(Row::Skipped) => current.has_rows = true,
            Err(kind) => {
                let err = RowError { line: line_no, kind };
                match mode {
                    ParseMode::Strict => return Err(err.into()),
                    ParseMode::Lenient => out.skipped.push(err),
                }
            }
        }
    }
    flush(&mut current, &mut out);
    Ok(out)
}

pub fn parse_conllu_str(input: &str, mode: ParseMode) -> Result<ParsedConllu, ConlluError> {
    parse_conllu(input.as_bytes(), mode)
}

/// A treebank directory after parsing.
#[derive(Debug, Clone, Default)]
pub struct Treebank {
    pub files: Vec<PathBuf>,
    pub sentences: Vec<UdSentence>,
    pub skipped: Vec<(PathBuf, RowError)>,
}

/// Lists the `*.conllu` files of `dir` whose split is in `splits`, sorted by
/// file name.
pub fn treebank_files(dir: &Path, splits: &[Split]) -> Result<Vec<(PathBuf, Split)>, ConlluError> {
    let mut files = Vec::new();
    if dir.is_dir() {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if let Some(split) = Split::from_file_name(name) {
                if splits.contains(&split) && path.is_file() {
                    files.push((path.clone(), split));
                }
            }
        }
    }
    files.sort_by(|a, b| a.0.file_name().cmp(&b.0.file_name()));
    if files.is_empty() {
        let splits = splits.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",");
        return Err(ConlluError::EmptyTreebank {
            dir: dir.to_path_buf(),
            splits,
        });
    }
    Ok(files)
}

/// Reads every selected split of a UD treebank directory. Files are parsed in
/// parallel and concatenated in file-name order.
pub fn iterate_treebank(dir: &Path, splits: &[Split], mode: ParseMode) -> Result<Treebank, ConlluError> {
    let files = treebank_files(dir, splits)?;
    let parsed: Vec<Result<ParsedConllu, ConlluError>> = files
        .par_iter()
        .map(|(path, split)| {
            let wrap = |e: ConlluError| ConlluError::InFile {
                path: path.clone(),
                source: Box::new(e),
            };
            let file = fs::File::open(path).map_err(|e| wrap(e.into()))?;
            let mut parsed = parse_conllu(io::BufReader::new(file), mode).map_err(wrap)?;
            for s in &mut parsed.sentences {
                s.split = Some(*split);
            }
            Ok(parsed)
        })
        .collect();

    let mut tb = Treebank::default();
    for ((path, _), parsed) in files.into_iter().zip(parsed) {
        let parsed = parsed?;
        tb.sentences.extend(parsed.sentences);
        tb.skipped.extend(parsed.skipped.into_iter().map(|e| (path.clone(), e)));
        tb.files.push(path);
    }
    Ok(tb)
}
