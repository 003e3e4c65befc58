use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use morphalign::stats::{nested_f_test, ols, spearman, Design, FTest, RegressionFit, SpearmanResult, StatsError};
use serde::Serialize;

use crate::error::{CliError, CliResult, Exit, OrExit};
use crate::manifest::RunManifest;
use crate::output::{parse_py_bool, write_json};

pub const METHOD: &str =
    "OLS with task dummy intercepts (substitute for a linear mixed-effects model with task random intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    Precision,
}

impl Metric {
    fn column(self) -> &'static str {
        match self {
            Metric::Recall => "boundary_recall_macro",
            Metric::Precision => "boundary_precision_macro",
        }
    }
}

fn parse_mapping(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((m, t)) if !m.is_empty() && !t.is_empty() => Ok((m.to_string(), t.to_string())),
        _ => Err("expected MODEL=TOKENIZER".into()),
    }
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// scores.csv written by `score`
    #[arg(long)]
    pub alignment: PathBuf,

    /// CSV with model, task, language, score, n_params, train_data_proportion
    #[arg(long)]
    pub performance: PathBuf,

    /// Alignment measure used as predictor
    #[arg(long, value_enum)]
    pub metric: Metric,

    /// Output JSON report
    #[arg(long)]
    pub out: PathBuf,

    /// Scoring condition `{fs}_{ist}` to read from the alignment file
    #[arg(long, default_value = "True_False")]
    pub condition: String,

    /// Context to read from the alignment file
    #[arg(long, default_value = "leading_space")]
    pub context: String,

    /// Model-to-tokenizer mapping; unmapped models use their own name
    #[arg(long = "model-map", value_parser = parse_mapping)]
    pub model_map: Vec<(String, String)>,
}

#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    metric: Metric,
    condition: &'a str,
    context: &'a str,
    model_map: BTreeMap<&'a str, &'a str>,
}

#[derive(Debug, Clone, Serialize)]
struct JoinedRow {
    model: String,
    tokenizer: String,
    task: String,
    language: String,
    alignment: f64,
    score: f64,
    n_params: f64,
    train_data_proportion: f64,
}

#[derive(Serialize)]
struct FitSummary {
    coefficients: BTreeMap<String, f64>,
    r_squared: f64,
    residual_ss: f64,
    total_ss: f64,
    n: usize,
    p: usize,
}

impl From<&RegressionFit> for FitSummary {
    fn from(fit: &RegressionFit) -> Self {
        FitSummary {
            coefficients: fit.coefficients.iter().cloned().collect(),
            r_squared: fit.r_squared,
            residual_ss: fit.residual_ss,
            total_ss: fit.total_ss,
            n: fit.n,
            p: fit.p,
        }
    }
}

#[derive(Serialize)]
struct RowCounts {
    performance_rows: usize,
    dropped_missing_proportion: usize,
    unmatched: usize,
    joined: usize,
}

#[derive(Serialize)]
struct CorrelateReport<'a> {
    manifest: &'a RunManifest,
    method: &'static str,
    config: RunConfig<'a>,
    rows: RowCounts,
    dropped_constant_predictors: Vec<&'static str>,
    base_model: FitSummary,
    full_model: FitSummary,
    f_test: FTest,
    alignment_slope: f64,
    simple_regression: FitSummary,
    spearman: SpearmanResult,
    scatter: &'a [JoinedRow],
}

fn column_index(headers: &csv::StringRecord, path: &Path, col: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h.trim() == col)
        .ok_or_else(|| CliError::msg(Exit::Data, format!("{}: missing column `{col}`", path.display())))
}

fn open(path: &Path) -> CliResult<(csv::Reader<std::fs::File>, csv::StringRecord)> {
    let mut reader = csv::Reader::from_path(path).or_exit_with(Exit::Io, || format!("opening {}", path.display()))?;
    let headers = reader
        .headers()
        .or_exit_with(Exit::Data, || format!("{}: header row", path.display()))?
        .clone();
    Ok((reader, headers))
}

fn number(path: &Path, line: usize, col: &str, raw: &str) -> CliResult<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
        CliError::msg(
            Exit::Data,
            format!("{}: row {line}: bad `{col}` value `{raw}`", path.display()),
        )
    })
}

fn is_missing(raw: &str) -> bool {
    matches!(
        raw.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none"
    )
}

/// Alignment per (tokenizer, language) for the requested condition and context.
fn read_alignment(args: &CorrelateArgs) -> CliResult<HashMap<(String, String), f64>> {
    let (fs, ist) = args
        .condition
        .split_once('_')
        .and_then(|(a, b)| Some((parse_py_bool(a)?, parse_py_bool(b)?)))
        .ok_or_else(|| {
            CliError::msg(
                Exit::Usage,
                format!("condition `{}` is not of the form True_False", args.condition),
            )
        })?;
    let path = &args.alignment;
    let (mut reader, headers) = open(path)?;
    let lang = column_index(&headers, path, "language")?;
    let tok = column_index(&headers, path, "tokenizer")?;
    let fs_col = column_index(&headers, path, "frequency_scaling")?;
    let ist_col = column_index(&headers, path, "include_single_token")?;
    let value = column_index(&headers, path, args.metric.column())?;
    let context = headers.iter().position(|h| h == "context");

    let mut out = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.or_exit_with(Exit::Data, || format!("{}: row {line}", path.display()))?;
        if parse_py_bool(&record[fs_col]) != Some(fs) || parse_py_bool(&record[ist_col]) != Some(ist) {
            continue;
        }
        if context.is_some_and(|c| record[c] != args.context) {
            continue;
        }
        let v = number(path, line, args.metric.column(), &record[value])?;
        let key = (record[tok].to_string(), record[lang].to_string());
        if out.insert(key.clone(), v).is_some() {
            return Err(CliError::msg(
                Exit::Data,
                format!(
                    "{}: {} / {} appears twice for this condition",
                    path.display(),
                    key.1,
                    key.0
                ),
            ));
        }
    }
    Ok(out)
}

fn stats_error(e: StatsError) -> CliError {
    CliError::new(Exit::Data, e)
}

pub fn run(args: &CorrelateArgs) -> CliResult<()> {
    let config = RunConfig {
        command: "correlate",
        metric: args.metric,
        condition: &args.condition,
        context: &args.context,
        model_map: args.model_map.iter().map(|(m, t)| (m.as_str(), t.as_str())).collect(),
    };
    let mut manifest = RunManifest::new(&config);
    manifest.add_input(&args.alignment)?;
    manifest.add_input(&args.performance)?;

    let alignment = read_alignment(args)?;
    let path = &args.performance;
    let (mut reader, headers) = open(path)?;
    let cols: Vec<usize> = [
        "model",
        "task",
        "language",
        "score",
        "n_params",
        "train_data_proportion",
    ]
    .iter()
    .map(|c| column_index(&headers, path, c))
    .collect::<CliResult<_>>()?;

    let mut counts = RowCounts {
        performance_rows: 0,
        dropped_missing_proportion: 0,
        unmatched: 0,
        joined: 0,
    };
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.or_exit_with(Exit::Data, || format!("{}: row {line}", path.display()))?;
        counts.performance_rows += 1;
        let field = |k: usize| record.get(cols[k]).unwrap_or("");
        if is_missing(field(5)) {
            counts.dropped_missing_proportion += 1;
            continue;
        }
        let model = field(0).to_string();
        let tokenizer = config
            .model_map
            .get(model.as_str())
            .map_or(model.clone(), |t| t.to_string());
        let language = field(2).to_string();
        let Some(&a) = alignment.get(&(tokenizer.clone(), language.clone())) else {
            counts.unmatched += 1;
            continue;
        };
        rows.push(JoinedRow {
            model,
            tokenizer,
            task: field(1).to_string(),
            language,
            alignment: a,
            score: number(path, line, "score", field(3))?,
            n_params: number(path, line, "n_params", field(4))?,
            train_data_proportion: number(path, line, "train_data_proportion", field(5))?,
        });
    }
    rows.sort_by(|a, b| {
        (&a.task, &a.language, &a.model)
            .cmp(&(&b.task, &b.language, &b.model))
            .then(a.score.total_cmp(&b.score))
    });
    counts.joined = rows.len();
    for r in &rows {
        *manifest.item_counts.entry(r.language.clone()).or_insert(0) += 1;
    }

    let pick = |f: fn(&JoinedRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let y = pick(|r| r.score);
    let alignment_values = pick(|r| r.alignment);
    let tasks: Vec<&str> = rows.iter().map(|r| r.task.as_str()).collect();

    // a predictor with no variation in the joined rows carries no information
    let mut dropped = Vec::new();
    let mut base = Design::new();
    for (name, values) in [
        ("n_params", pick(|r| r.n_params)),
        ("train_data_proportion", pick(|r| r.train_data_proportion)),
    ] {
        if values.windows(2).all(|w| w[0] == w[1]) {
            dropped.push(name);
        } else {
            base = base.numeric(name, &values).map_err(stats_error)?;
        }
    }
    for name in &dropped {
        eprintln!("warning: `{name}` is constant across the joined rows; dropped from the models");
    }
    if !tasks.is_empty() {
        base = base.categorical("task", &tasks).map_err(stats_error)?;
    }
    let full = base
        .clone()
        .numeric("alignment", &alignment_values)
        .map_err(stats_error)?;
    let needed = full.n_predictors() + 2;
    if rows.len() < needed {
        return Err(CliError::msg(
            Exit::Data,
            format!(
                "join produced {} rows; the full model needs at least {needed}",
                rows.len()
            ),
        ));
    }

    let base_fit = ols(&base, &y).map_err(stats_error)?;
    let full_fit = ols(&full, &y).map_err(stats_error)?;
    let f_test = nested_f_test(&base_fit, &full_fit).map_err(stats_error)?;
    let simple_fit = ols(
        &Design::new()
            .numeric("alignment", &alignment_values)
            .map_err(stats_error)?,
        &y,
    )
    .map_err(stats_error)?;
    let rank = spearman(&alignment_values, &y).map_err(stats_error)?;
    let alignment_slope = full_fit.coefficient("alignment").expect("alignment is a predictor");

    let report = CorrelateReport {
        manifest: &manifest,
        method: METHOD,
        config,
        rows: counts,
        dropped_constant_predictors: dropped,
        base_model: (&base_fit).into(),
        full_model: (&full_fit).into(),
        f_test,
        alignment_slope,
        simple_regression: (&simple_fit).into(),
        spearman: rank,
        scatter: &rows,
    };
    write_json(&args.out, &report)?;

    println!(
        "rows joined: {} (dropped for missing proportion: {})",
        report.rows.joined, report.rows.dropped_missing_proportion
    );
    println!(
        "R^2 base {:.4}  full {:.4}  F({}, {}) = {:.4}  p = {:.4}",
        base_fit.r_squared, full_fit.r_squared, f_test.df_num, f_test.df_den, f_test.f, f_test.p_value
    );
    println!(
        "alignment slope {alignment_slope:.4}  spearman rho {:.4} (p = {:.4})",
        rank.rho, rank.p_value
    );
    println!("method: {METHOD}");
    Ok(())
}
