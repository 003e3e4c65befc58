use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult, Exit, OrExit};
use crate::manifest::RunManifest;
use crate::output::{create_file, fixed4, parse_py_bool, py_bool, write_json};

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Two or more scores.csv files
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,

    /// Output directory for ranking.csv and ranking.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
enum Measure {
    Precision,
    Recall,
}

impl Measure {
    fn column(self) -> &'static str {
        match self {
            Measure::Precision => "boundary_precision_macro",
            Measure::Recall => "boundary_recall_macro",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Measure::Precision => "precision",
            Measure::Recall => "recall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
struct Condition {
    context: String,
    frequency_scaling: bool,
    include_single_token: bool,
}

impl Condition {
    fn label(&self) -> String {
        format!(
            "{}_{}/{}",
            py_bool(self.frequency_scaling),
            py_bool(self.include_single_token),
            self.context
        )
    }
}

/// (precision, recall) per condition, tokenizer and language.
type Table = BTreeMap<Condition, BTreeMap<String, BTreeMap<String, (f64, f64)>>>;

#[derive(Serialize)]
struct Ranked {
    rank: usize,
    tokenizer: String,
    mean: f64,
}

#[derive(Serialize)]
struct RankingCell {
    condition: Condition,
    metric: Measure,
    languages: Vec<String>,
    ranking: Vec<Ranked>,
}

#[derive(Serialize)]
struct RankChange {
    tokenizer: String,
    /// Rank per `{fs}_{ist}/{context}:{metric}` cell.
    ranks: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    manifest: &'a RunManifest,
    measures: BTreeMap<&'static str, &'static str>,
    warnings: &'a [String],
    cells: &'a [RankingCell],
    leaders: BTreeMap<String, String>,
    leader_flip: bool,
    rank_changes: Vec<RankChange>,
}

const REQUIRED: [&str; 7] = [
    "language",
    "tokenizer",
    "context",
    "frequency_scaling",
    "include_single_token",
    "boundary_precision_macro",
    "boundary_recall_macro",
];

fn read_scores(path: &Path, table: &mut Table) -> CliResult<()> {
    let mut reader = csv::Reader::from_path(path).or_exit_with(Exit::Io, || format!("opening {}", path.display()))?;
    let headers = reader.headers().or_exit(Exit::Data)?.clone();
    let mut idx = BTreeMap::new();
    for col in REQUIRED {
        let i = headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| CliError::msg(Exit::Data, format!("{}: missing column `{col}`", path.display())))?;
        idx.insert(col, i);
    }
    for (line, record) in reader.records().enumerate() {
        let record = record.or_exit_with(Exit::Data, || format!("{}: row {}", path.display(), line + 1))?;
        let get = |col: &str| record.get(idx[col]).unwrap_or("");
        let bad = |col: &str| {
            CliError::msg(
                Exit::Data,
                format!("{}: row {}: bad `{col}` value", path.display(), line + 1),
            )
        };
        let flag = |col: &str| parse_py_bool(get(col)).ok_or_else(|| bad(col));
        let number = |col: &str| get(col).trim().parse::<f64>().map_err(|_| bad(col));
        let condition = Condition {
            context: get("context").to_string(),
            frequency_scaling: flag("frequency_scaling")?,
            include_single_token: flag("include_single_token")?,
        };
        let value = (number("boundary_precision_macro")?, number("boundary_recall_macro")?);
        let previous = table
            .entry(condition)
            .or_default()
            .entry(get("tokenizer").to_string())
            .or_default()
            .insert(get("language").to_string(), value);
        if previous.is_some() {
            return Err(CliError::msg(
                Exit::Data,
                format!(
                    "{}: row {}: {} / {} scored more than once across inputs",
                    path.display(),
                    line + 1,
                    get("language"),
                    get("tokenizer")
                ),
            ));
        }
    }
    Ok(())
}

/// Competition ranking ("1224") by descending mean, ties broken by name for order only.
fn rank(means: Vec<(String, f64)>) -> Vec<Ranked> {
    let mut means = means;
    means.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut out: Vec<Ranked> = Vec::with_capacity(means.len());
    for (i, (tokenizer, mean)) in means.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if prev.mean == mean => prev.rank,
            _ => i + 1,
        };
        out.push(Ranked { rank, tokenizer, mean });
    }
    out
}

pub fn run(args: &CompareArgs) -> CliResult<()> {
    if args.inputs.len() < 2 {
        return Err(CliError::msg(Exit::Usage, "compare needs at least two score files"));
    }
    let mut manifest = RunManifest::new(&("compare", &args.inputs));
    let mut table = Table::new();
    for path in &args.inputs {
        manifest.add_input(path)?;
        read_scores(path, &mut table)?;
    }

    let mut warnings = Vec::new();
    let mut cells = Vec::new();
    for (condition, by_tokenizer) in &table {
        let all: BTreeSet<&String> = by_tokenizer.values().flat_map(|langs| langs.keys()).collect();
        let shared: BTreeSet<&String> = all
            .iter()
            .copied()
            .filter(|l| by_tokenizer.values().all(|langs| langs.contains_key(*l)))
            .collect();
        if shared.is_empty() {
            warnings.push(format!(
                "{}: no language is covered by every tokenizer; skipped",
                condition.label()
            ));
            continue;
        }
        if shared.len() < all.len() {
            warnings.push(format!(
                "{}: language coverage differs; using the intersection [{}]",
                condition.label(),
                shared.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            ));
        }
        for measure in [Measure::Precision, Measure::Recall] {
            let means = by_tokenizer
                .iter()
                .map(|(tok, langs)| {
                    let sum: f64 = shared
                        .iter()
                        .map(|l| {
                            let (p, r) = langs[*l];
                            if measure == Measure::Precision {
                                p
                            } else {
                                r
                            }
                        })
                        .sum();
                    (tok.clone(), sum / shared.len() as f64)
                })
                .collect();
            cells.push(RankingCell {
                condition: condition.clone(),
                metric: measure,
                languages: shared.iter().map(|s| s.to_string()).collect(),
                ranking: rank(means),
            });
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if cells.is_empty() {
        return Err(CliError::msg(Exit::Data, "nothing to compare"));
    }
    // score rows read per language
    for lang in table.values().flat_map(|t| t.values()).flat_map(|l| l.keys()) {
        *manifest.item_counts.entry(lang.clone()).or_insert(0) += 1;
    }

    let cell_key = |c: &RankingCell| format!("{}:{}", c.condition.label(), c.metric.name());
    let leaders: BTreeMap<String, String> = cells
        .iter()
        .map(|c| (cell_key(c), c.ranking[0].tokenizer.clone()))
        .collect();
    let leader_flip = leaders.values().collect::<BTreeSet<_>>().len() > 1;
    let mut ranks: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for c in &cells {
        for r in &c.ranking {
            ranks
                .entry(r.tokenizer.clone())
                .or_default()
                .insert(cell_key(c), r.rank);
        }
    }
    let rank_changes: Vec<RankChange> = ranks
        .into_iter()
        .filter(|(_, by_cell)| by_cell.values().collect::<BTreeSet<_>>().len() > 1)
        .map(|(tokenizer, ranks)| RankChange { tokenizer, ranks })
        .collect();

    let csv_path = args.out.join("ranking.csv");
    let mut writer = csv::Writer::from_writer(create_file(&csv_path)?);
    writer
        .write_record([
            "context",
            "frequency_scaling",
            "include_single_token",
            "metric",
            "rank",
            "tokenizer",
            "mean",
            "n_languages",
        ])
        .or_exit(Exit::Io)?;
    for c in &cells {
        for r in &c.ranking {
            writer
                .write_record([
                    c.condition.context.as_str(),
                    py_bool(c.condition.frequency_scaling),
                    py_bool(c.condition.include_single_token),
                    c.metric.name(),
                    &r.rank.to_string(),
                    &r.tokenizer,
                    &fixed4(r.mean),
                    &c.languages.len().to_string(),
                ])
                .or_exit(Exit::Io)?;
        }
    }
    writer
        .into_inner()
        .map_err(|e| CliError::msg(Exit::Io, e))?
        .flush()
        .or_exit_with(Exit::Io, || format!("writing {}", csv_path.display()))?;

    let measures = [Measure::Precision, Measure::Recall]
        .into_iter()
        .map(|m| (m.name(), m.column()))
        .collect();
    let report = CompareReport {
        manifest: &manifest,
        measures,
        warnings: &warnings,
        cells: &cells,
        leaders: leaders.clone(),
        leader_flip,
        rank_changes,
    };
    write_json(&args.out.join("ranking.json"), &report)?;

    for c in &cells {
        let order: Vec<String> = c
            .ranking
            .iter()
            .map(|r| format!("{}. {} ({})", r.rank, r.tokenizer, fixed4(r.mean)))
            .collect();
        println!(
            "{:<9} {:<22} {}",
            c.metric.name(),
            c.condition.label(),
            order.join("  ")
        );
    }
    if leader_flip {
        println!("rank flip: the top tokenizer differs across metrics or conditions");
    }
    Ok(())
}
