use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use morphalign::gold::{read_dataset, read_header, DatasetError, GoldItem, LanguageDataset};
use morphalign::score::{
    aggregate, breakdown, compression_metrics, condition_label, dedupe_types, frequency_alignment_correlation,
    AlignmentMetric, Breakdown, BreakdownKey, Compression, Context, ContextMode, EvalConfig, FrequencyCorrelation,
    MetricsBundle, ScoredItem, CONDITION_GRID,
};
use morphalign::tokenize::{
    ingest_pretokenized, load_tokenizer, PretokenizedError, TokenizerError, TokenizerKind, TokenizerSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult, Exit, OrExit};
use crate::manifest::RunManifest;
use crate::output::{create_file, fixed4, py_bool, sidecar_path, write_json};

/// Context label used for results that were tokenized elsewhere.
const GIVEN_CONTEXT: &str = "given";

pub const CSV_HEADER: [&str; 17] = [
    "language",
    "tokenizer",
    "context",
    "frequency_scaling",
    "include_single_token",
    "boundary_precision_macro",
    "boundary_recall_macro",
    "subword_precision_micro",
    "subword_precision_macro",
    "subword_recall_micro",
    "subword_recall_macro",
    "subword_f1_micro",
    "subword_f1_macro",
    "n_items",
    "n_skipped",
    "fertility",
    "ctc",
];

#[derive(Debug, Clone, Serialize)]
pub struct TokenizerArg {
    pub name: String,
    pub path: PathBuf,
    pub merges: Option<PathBuf>,
}

fn split_name(raw: &str) -> (Option<&str>, &str) {
    match raw.split_once('=') {
        Some((name, rest)) if !name.is_empty() => (Some(name), rest),
        _ => (None, raw),
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// `NAME=PATH[,MERGES]`; the name defaults to the file stem.
fn parse_tokenizer_arg(raw: &str) -> Result<TokenizerArg, String> {
    let (name, rest) = split_name(raw);
    let (path, merges) = match rest.split_once(',') {
        Some((p, m)) => (PathBuf::from(p), Some(PathBuf::from(m))),
        None => (PathBuf::from(rest), None),
    };
    if path.as_os_str().is_empty() {
        return Err("expected NAME=PATH[,MERGES]".into());
    }
    let name = name.map(str::to_string).unwrap_or_else(|| stem_of(&path));
    Ok(TokenizerArg { name, path, merges })
}

fn parse_pretokenized_arg(raw: &str) -> Result<TokenizerArg, String> {
    let (name, path) = split_name(raw);
    if path.is_empty() {
        return Err("expected [NAME=]PATH".into());
    }
    let path = PathBuf::from(path);
    let name = name.map(str::to_string).unwrap_or_else(|| stem_of(&path));
    Ok(TokenizerArg {
        name,
        path,
        merges: None,
    })
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(true).args(["tokenizers", "pretokenized"])))]
pub struct ScoreArgs {
    /// Dataset JSONL files written by `build`
    #[arg(long = "dataset", required = true, num_args = 1..)]
    pub datasets: Vec<PathBuf>,

    /// Tokenizer definition as NAME=PATH[,MERGES] (JSON, or vocab + merges text)
    #[arg(long = "tokenizer", value_parser = parse_tokenizer_arg)]
    pub tokenizers: Vec<TokenizerArg>,

    /// Pre-tokenized JSONL as [NAME=]PATH
    #[arg(long = "pretokenized", value_parser = parse_pretokenized_arg)]
    pub pretokenized: Vec<TokenizerArg>,

    /// Output directory for reports and scores.csv
    #[arg(long)]
    pub out: PathBuf,

    /// Score all four frequency-scaling x single-token conditions
    #[arg(long)]
    pub grid: bool,

    /// Add a breakdown by UPOS
    #[arg(long)]
    pub by_pos: bool,

    /// Extra breakdown key: `upos` or `feat:NAME`
    #[arg(long = "breakdown")]
    pub breakdown: Vec<BreakdownKey>,

    /// Tokenize words with a leading space, bare, or both
    #[arg(long, default_value = "leading_space")]
    pub context: ContextMode,

    /// Score every occurrence instead of one item per (word, segmentation)
    #[arg(long)]
    pub no_dedupe_types: bool,

    /// Include per-item scores in the reports
    #[arg(long)]
    pub emit_items: bool,
}

impl ScoreArgs {
    fn breakdown_keys(&self) -> Vec<BreakdownKey> {
        let mut keys: BTreeSet<BreakdownKey> = self.breakdown.iter().cloned().collect();
        if self.by_pos {
            keys.insert(BreakdownKey::Upos);
        }
        keys.into_iter().collect()
    }

    fn conditions(&self) -> Vec<(bool, bool)> {
        if self.grid {
            CONDITION_GRID.to_vec()
        } else {
            vec![(true, false)]
        }
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    datasets: &'a [PathBuf],
    tokenizers: &'a [TokenizerArg],
    pretokenized: &'a [TokenizerArg],
    conditions: Vec<String>,
    breakdown_keys: Vec<String>,
    context: ContextMode,
    dedupe_types: bool,
    emit_items: bool,
}

enum Source {
    Engine(TokenizerSpec),
    Given(morphalign::tokenize::PretokenizedSet),
}

struct NamedSource {
    name: String,
    kind: TokenizerKind,
    source: Source,
}

struct Loaded {
    dataset: LanguageDataset,
    items: Vec<GoldItem>,
}

#[derive(Serialize)]
struct ReportConfig<'a> {
    language: &'a str,
    tokenizer: &'a str,
    tokenizer_kind: TokenizerKind,
    context: &'a str,
    condition: String,
    frequency_scaling: bool,
    include_single_token: bool,
    dedupe_types: bool,
    grid: bool,
    by_pos: bool,
    breakdown_keys: Vec<String>,
    context_mode: ContextMode,
    emit_items: bool,
    position_space: &'static str,
    single_token_micro_credit: &'static str,
    dispersion: &'static str,
}

#[derive(Serialize)]
struct DatasetInfo<'a> {
    language: &'a str,
    script: &'a str,
    treebank: &'a str,
    n_items: usize,
    n_occurrences: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    manifest: &'a RunManifest,
    config: ReportConfig<'a>,
    dataset: DatasetInfo<'a>,
    metrics: MetricsBundle,
    compression: Compression,
    frequency_correlation: Option<FrequencyCorrelation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakdown: Option<Breakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    items: Option<&'a [ScoredItem]>,
}

/// One scored (dataset, tokenizer, context) combination.
struct Cell {
    dataset: usize,
    source: usize,
    context: Option<Context>,
    items: Vec<ScoredItem>,
}

fn load_dataset(path: &Path) -> CliResult<LanguageDataset> {
    let side = sidecar_path(path);
    let header = if side.exists() {
        let file = File::open(&side).or_exit_with(Exit::Io, || format!("opening {}", side.display()))?;
        Some(read_header(BufReader::new(file)).or_exit_with(Exit::Data, || format!("reading {}", side.display()))?)
    } else {
        None
    };
    let file = File::open(path).or_exit_with(Exit::Io, || format!("opening {}", path.display()))?;
    read_dataset(BufReader::new(file), header).map_err(|e| {
        let exit = if matches!(e, DatasetError::Io(_)) {
            Exit::Io
        } else {
            Exit::Data
        };
        CliError::new(
            exit,
            anyhow::Error::new(e).context(format!("reading {}", path.display())),
        )
    })
}

fn load_sources(args: &ScoreArgs) -> CliResult<Vec<NamedSource>> {
    let mut out = Vec::new();
    for t in &args.tokenizers {
        let spec = load_tokenizer(&t.path, t.merges.as_deref(), &t.name).map_err(|e| {
            let exit = if matches!(e, TokenizerError::Io(_)) {
                Exit::Io
            } else {
                Exit::Data
            };
            CliError::new(
                exit,
                anyhow::Error::new(e).context(format!("loading tokenizer {}", t.path.display())),
            )
        })?;
        out.push(NamedSource {
            name: t.name.clone(),
            kind: spec.kind,
            source: Source::Engine(spec),
        });
    }
    for t in &args.pretokenized {
        let file = File::open(&t.path).or_exit_with(Exit::Io, || format!("opening {}", t.path.display()))?;
        let set = ingest_pretokenized(BufReader::new(file)).map_err(|e| {
            let exit = if matches!(e, PretokenizedError::Io(_)) {
                Exit::Io
            } else {
                Exit::Data
            };
            CliError::new(
                exit,
                anyhow::Error::new(e).context(format!("reading {}", t.path.display())),
            )
        })?;
        out.push(NamedSource {
            name: t.name.clone(),
            kind: TokenizerKind::Pretokenized,
            source: Source::Given(set),
        });
    }
    let mut seen = BTreeSet::new();
    for s in &out {
        if s.name.is_empty() || s.name.contains(['/', '\\']) {
            return Err(CliError::msg(
                Exit::Usage,
                format!("invalid tokenizer name `{}`", s.name),
            ));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(CliError::msg(
                Exit::Usage,
                format!("tokenizer name `{}` given twice", s.name),
            ));
        }
    }
    Ok(out)
}

fn score_cell(items: &[GoldItem], source: &NamedSource, context: Option<Context>) -> CliResult<Vec<ScoredItem>> {
    items
        .iter()
        .map(|item| {
            let pred = match (&source.source, context) {
                (Source::Engine(spec), Some(ctx)) => spec
                    .tokenize_word(&item.word, ctx.leading_space())
                    .or_exit_with(Exit::Data, || format!("{}: tokenizing `{}`", source.name, item.word))?,
                (Source::Given(set), _) => set.lookup(item).cloned().ok_or_else(|| {
                    CliError::msg(
                        Exit::Data,
                        format!(
                            "{}: no tokenization for item {} (`{}`)",
                            source.name,
                            item.key(),
                            item.word
                        ),
                    )
                })?,
                (Source::Engine(_), None) => unreachable!("engines always run in a context"),
            };
            ScoredItem::new(item, &pred).or_exit(Exit::Data)
        })
        .collect()
}

pub fn run(args: &ScoreArgs) -> CliResult<()> {
    let conditions = args.conditions();
    let keys = args.breakdown_keys();
    let dedupe = !args.no_dedupe_types;
    let config = RunConfig {
        command: "score",
        datasets: &args.datasets,
        tokenizers: &args.tokenizers,
        pretokenized: &args.pretokenized,
        conditions: conditions.iter().map(|&(fs, ist)| condition_label(fs, ist)).collect(),
        breakdown_keys: keys.iter().map(ToString::to_string).collect(),
        context: args.context,
        dedupe_types: dedupe,
        emit_items: args.emit_items,
    };
    let mut manifest = RunManifest::new(&config);

    let mut loaded: Vec<Loaded> = Vec::new();
    for path in &args.datasets {
        manifest.add_input(path)?;
        let dataset = load_dataset(path)?;
        if !dataset.scoreable {
            eprintln!(
                "warning: {} ({}) has {} items and is not scoreable; skipped",
                dataset.language,
                path.display(),
                dataset.items.len()
            );
            continue;
        }
        if loaded.iter().any(|l| l.dataset.language == dataset.language) {
            return Err(CliError::msg(
                Exit::Usage,
                format!("language `{}` appears in more than one dataset", dataset.language),
            ));
        }
        let items = if dedupe {
            dedupe_types(&dataset.items)
        } else {
            dataset.items.clone()
        };
        manifest.item_counts.insert(dataset.language.clone(), items.len());
        loaded.push(Loaded { dataset, items });
    }
    if loaded.is_empty() {
        return Err(CliError::msg(Exit::Data, "no scoreable datasets"));
    }
    for t in args.tokenizers.iter().chain(&args.pretokenized) {
        manifest.add_input(&t.path)?;
        if let Some(m) = &t.merges {
            manifest.add_input(m)?;
        }
    }
    let sources = load_sources(args)?;

    let mut plan = Vec::new();
    for d in 0..loaded.len() {
        for (s, source) in sources.iter().enumerate() {
            match source.source {
                Source::Engine(_) => plan.extend(args.context.contexts().into_iter().map(|c| (d, s, Some(c)))),
                Source::Given(_) => plan.push((d, s, None)),
            }
        }
    }
    let cells: Vec<Cell> = plan
        .par_iter()
        .map(|&(d, s, context)| {
            score_cell(&loaded[d].items, &sources[s], context).map(|items| Cell {
                dataset: d,
                source: s,
                context,
                items,
            })
        })
        .collect::<CliResult<_>>()?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for cell in &cells {
        let data = &loaded[cell.dataset];
        let source = &sources[cell.source];
        let context = cell.context.map_or(GIVEN_CONTEXT, Context::as_str);
        let scores: Vec<_> = cell.items.iter().map(|i| i.score).collect();
        let compression = compression_metrics(&scores).or_exit(Exit::Data)?;
        for &(fs, ist) in &conditions {
            let eval = EvalConfig {
                breakdown_keys: keys.clone(),
                context_mode: args.context,
                dedupe_types: dedupe,
                ..EvalConfig::default()
            }
            .with_condition(fs, ist);
            let label = condition_label(fs, ist);
            let metrics = aggregate(&scores, &eval).or_exit_with(Exit::Data, || {
                format!("{} / {} / {label}", data.dataset.language, source.name)
            })?;
            let frequency_correlation = if scores.len() >= 3 {
                frequency_alignment_correlation(&scores, ist, AlignmentMetric::default()).ok()
            } else {
                None
            };
            let report = Report {
                manifest: &manifest,
                config: ReportConfig {
                    language: &data.dataset.language,
                    tokenizer: &source.name,
                    tokenizer_kind: source.kind,
                    context,
                    condition: label.clone(),
                    frequency_scaling: fs,
                    include_single_token: ist,
                    dedupe_types: dedupe,
                    grid: args.grid,
                    by_pos: args.by_pos,
                    breakdown_keys: keys.iter().map(ToString::to_string).collect(),
                    context_mode: args.context,
                    emit_items: args.emit_items,
                    position_space: "utf8_bytes",
                    single_token_micro_credit: "tp = gold morphemes, fp = fn = 0",
                    dispersion: "weighted per-item standard deviation",
                },
                dataset: DatasetInfo {
                    language: &data.dataset.language,
                    script: &data.dataset.script,
                    treebank: &data.dataset.treebank_name,
                    n_items: data.items.len(),
                    n_occurrences: data.dataset.items.len(),
                },
                metrics: metrics.clone(),
                compression,
                frequency_correlation,
                breakdown: (!keys.is_empty()).then(|| breakdown(&cell.items, &eval)),
                items: args.emit_items.then_some(cell.items.as_slice()),
            };
            let mut file_name = format!("{}_{}_{label}", data.dataset.language, source.name);
            if args.context == ContextMode::Both && cell.context.is_some() {
                file_name.push('_');
                file_name.push_str(context);
            }
            write_json(&args.out.join(format!("{file_name}.json")), &report)?;

            let mut row = vec![
                data.dataset.language.clone(),
                source.name.clone(),
                context.to_string(),
                py_bool(fs).to_string(),
                py_bool(ist).to_string(),
            ];
            row.extend(metrics.metrics().iter().map(|(_, v)| fixed4(*v)));
            row.push(metrics.n_items_scored.to_string());
            row.push(metrics.n_items_skipped.to_string());
            row.push(fixed4(compression.fertility));
            row.push(compression.corpus_token_count.to_string());
            rows.push(row);
        }
    }
    rows.sort();

    let csv_path = args.out.join("scores.csv");
    let mut writer = csv::Writer::from_writer(create_file(&csv_path)?);
    writer.write_record(CSV_HEADER).or_exit(Exit::Io)?;
    for row in &rows {
        writer.write_record(row).or_exit(Exit::Io)?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::msg(Exit::Io, e))?
        .flush()
        .or_exit_with(Exit::Io, || format!("writing {}", csv_path.display()))?;
    write_json(&args.out.join("scores.manifest.json"), &manifest)?;

    for row in &rows {
        println!(
            "{:<6} {:<16} {:<13} fs={:<5} ist={:<5} P={} R={} n={}",
            row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[13]
        );
    }
    Ok(())
}
