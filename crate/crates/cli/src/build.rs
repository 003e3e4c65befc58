use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use morphalign::conllu::{iterate_treebank, ParseMode, Split};
use morphalign::gold::{
    build_dataset, write_dataset, BuildOptions, DatasetHeader, FrequencyUnit, LanguageMeta, MatchPolicy,
};
use serde::Serialize;

use crate::error::{CliError, CliResult, Exit, OrExit};
use crate::manifest::RunManifest;
use crate::output::{create_file, sidecar_path, write_json};

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory holding `*-{train,dev,test}.conllu` files
    #[arg(long)]
    pub treebank: PathBuf,

    /// ISO 639-3 language code
    #[arg(long)]
    pub lang: String,

    /// ISO 15924 script code
    #[arg(long)]
    pub script: String,

    /// Output JSONL path; the stats sidecar goes next to it
    #[arg(long)]
    pub out: PathBuf,

    /// Splits to read
    #[arg(long, value_delimiter = ',', default_values_t = Split::ALL.to_vec())]
    pub splits: Vec<Split>,

    /// Lowercase word and lemma before matching
    #[arg(long)]
    pub case_insensitive: bool,

    /// Items needed for a scoreable dataset (never below 100)
    #[arg(long, default_value_t = 100)]
    pub min_items: usize,

    /// Count lemma occurrences instead of wordform occurrences
    #[arg(long)]
    pub lemma_frequency: bool,

    /// Abort on the first malformed row instead of skipping it
    #[arg(long)]
    pub strict: bool,

    /// Treebank name recorded in the dataset (defaults to the directory name)
    #[arg(long)]
    pub treebank_name: Option<String>,
}

#[derive(Serialize)]
struct BuildConfig<'a> {
    command: &'static str,
    language: &'a str,
    script: &'a str,
    treebank: &'a str,
    splits: &'a [Split],
    options: BuildOptions,
    strict: bool,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    header: DatasetHeader,
    splits: &'a [Split],
    skipped_rows: usize,
    manifest: RunManifest,
}

pub fn run(args: &BuildArgs) -> CliResult<()> {
    let mode = if args.strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let treebank = iterate_treebank(&args.treebank, &args.splits, mode).map_err(|e| {
        let exit = match e {
            morphalign::conllu::ConlluError::Io(_) => Exit::Io,
            _ => Exit::Data,
        };
        CliError::new(exit, e)
    })?;
    let name = args.treebank_name.clone().unwrap_or_else(|| {
        args.treebank
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| args.treebank.display().to_string())
    });
    let options = BuildOptions {
        policy: if args.case_insensitive {
            MatchPolicy::case_insensitive()
        } else {
            MatchPolicy::default()
        },
        frequency_unit: if args.lemma_frequency {
            FrequencyUnit::Lemma
        } else {
            FrequencyUnit::Wordform
        },
        min_items: args.min_items,
    };
    let meta = LanguageMeta {
        language: args.lang.clone(),
        script: args.script.clone(),
        treebank: name.clone(),
    };
    let dataset = build_dataset(&treebank.sentences, &meta, options);

    let config = BuildConfig {
        command: "build",
        language: &args.lang,
        script: &args.script,
        treebank: &name,
        splits: &args.splits,
        options,
        strict: args.strict,
    };
    let mut manifest = RunManifest::new(&config);
    for file in &treebank.files {
        manifest.add_input(file)?;
    }
    manifest.item_counts.insert(args.lang.clone(), dataset.items.len());

    let mut out = create_file(&args.out)?;
    write_dataset(&dataset, &mut out)
        .and_then(|_| out.flush())
        .or_exit_with(Exit::Io, || format!("writing {}", args.out.display()))?;
    let sidecar = Sidecar {
        header: dataset.header(),
        splits: &args.splits,
        skipped_rows: treebank.skipped.len(),
        manifest,
    };
    write_json(&sidecar_path(&args.out), &sidecar)?;

    let stats = &dataset.stats;
    let rejected: Vec<String> = stats
        .rejected
        .iter()
        .map(|(r, n)| format!("{}={n}", rejection_name(*r)))
        .collect();
    eprintln!(
        "{}: {} items from {} candidates ({} sentences, {} skipped rows); rejected: {}",
        args.lang,
        dataset.items.len(),
        stats.candidates,
        treebank.sentences.len(),
        treebank.skipped.len(),
        if rejected.is_empty() {
            "none".to_string()
        } else {
            rejected.join(", ")
        },
    );
    if !dataset.scoreable {
        return Err(CliError::msg(
            Exit::BelowThreshold,
            format!(
                "{}: {} items is below the scoreable threshold of {}",
                args.lang,
                dataset.items.len(),
                args.min_items.max(morphalign::gold::MIN_SCOREABLE_ITEMS)
            ),
        ));
    }
    Ok(())
}

fn rejection_name(r: morphalign::gold::Rejection) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{r:?}"))
}
