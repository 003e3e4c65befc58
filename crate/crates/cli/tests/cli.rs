mod common;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use common::{build_fixture, code, morphalign, read_json, s, stderr, tokenizer, treebank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn build_fixture_is_scoreable() {
    let dir = tempfile::tempdir().unwrap();
    let out = build_fixture(dir.path());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 120);
    let side = read_json(&dir.path().join("xxx.stats.json"));
    assert_eq!(side["n_items"], 120);
    assert_eq!(side["scoreable"], true);
    assert_eq!(side["manifest"]["item_counts"]["xxx"], 120);
    assert_eq!(side["manifest"]["inputs"].as_object().unwrap().len(), 3);
}

#[test]
fn build_below_threshold_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("xxx.jsonl");
    let run = morphalign(&[
        "build",
        "--treebank",
        s(&treebank()),
        "--lang",
        "xxx",
        "--script",
        "Latn",
        "--out",
        s(&out),
        "--min-items",
        "200",
    ]);
    assert_eq!(code(&run), 4, "{}", stderr(&run));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 120);
    assert_eq!(read_json(&dir.path().join("xxx.stats.json"))["scoreable"], false);
}

#[test]
fn build_missing_split_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let tb = dir.path().join("tb");
    fs::create_dir(&tb).unwrap();
    fs::copy(
        treebank().join("xx_fixture-ud-train.conllu"),
        tb.join("xx_fixture-ud-train.conllu"),
    )
    .unwrap();
    let out = dir.path().join("x.jsonl");
    let run = morphalign(&[
        "build",
        "--treebank",
        s(&tb),
        "--lang",
        "xxx",
        "--script",
        "Latn",
        "--out",
        s(&out),
        "--splits",
        "test",
    ]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("empty treebank"), "{}", stderr(&run));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let run = morphalign(&["build", "--no-such-flag"]);
    assert_eq!(code(&run), 2);
    let run = morphalign(&[
        "score",
        "--dataset",
        "x.jsonl",
        "--tokenizer",
        "t.json",
        "--out",
        "o",
        "--breakdown",
        "lemma",
    ]);
    assert_eq!(code(&run), 2);
}

fn report_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("xxx_"))
        .collect();
    names.sort();
    names
}

#[test]
fn grid_writes_four_reports_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = build_fixture(dir.path());
    let out = dir.path().join("scores");
    let run = morphalign(&[
        "score",
        "--dataset",
        s(&data),
        "--tokenizer",
        s(&tokenizer("toy_morph")),
        "--out",
        s(&out),
        "--grid",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(
        report_names(&out),
        [
            "xxx_toy_morph_False_False.json",
            "xxx_toy_morph_False_True.json",
            "xxx_toy_morph_True_False.json",
            "xxx_toy_morph_True_True.json"
        ]
    );
    let csv = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn default_condition_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = build_fixture(dir.path());
    let out = dir.path().join("scores");
    let run = morphalign(&[
        "score",
        "--dataset",
        s(&data),
        "--tokenizer",
        s(&tokenizer("toy_morph")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(report_names(&out), ["xxx_toy_morph_True_False.json"]);
    let report = read_json(&out.join("xxx_toy_morph_True_False.json"));
    assert_eq!(report["config"]["frequency_scaling"], true);
    assert_eq!(report["config"]["include_single_token"], false);
    assert_eq!(report["config"]["context"], "leading_space");
    assert_eq!(report["config"]["dedupe_types"], true);
    assert!(report.get("breakdown").is_none());
    assert!(report.get("items").is_none());
}

#[test]
fn config_echo_follows_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = build_fixture(dir.path());
    let out = dir.path().join("scores");
    let run = morphalign(&[
        "score",
        "--dataset",
        s(&data),
        "--tokenizer",
        &format!("morph={}", s(&tokenizer("toy_morph"))),
        "--out",
        s(&out),
        "--by-pos",
        "--breakdown",
        "feat:Number",
        "--context",
        "both",
        "--no-dedupe-types",
        "--emit-items",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(
        report_names(&out),
        [
            "xxx_morph_True_False_bare.json",
            "xxx_morph_True_False_leading_space.json"
        ]
    );
    let report = read_json(&out.join("xxx_morph_True_False_bare.json"));
    let config = &report["config"];
    assert_eq!(config["tokenizer"], "morph");
    assert_eq!(config["context"], "bare");
    assert_eq!(config["context_mode"], "both");
    assert_eq!(config["by_pos"], true);
    assert_eq!(config["dedupe_types"], false);
    assert_eq!(config["breakdown_keys"], serde_json::json!(["upos", "feat:Number"]));
    let upos = report["breakdown"]["upos"].as_object().unwrap();
    let total: u64 = upos.values().map(|b| b["n_items_scored"].as_u64().unwrap()).sum();
    assert_eq!(total, report["metrics"]["n_items_scored"].as_u64().unwrap());
    assert!(report["breakdown"]["feat:Number"].get("_absent_").is_some());
    assert_eq!(report["items"].as_array().unwrap().len(), 120);
    assert_eq!(report["dataset"]["n_items"], 120);
}

#[test]
fn pretokenized_input_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = build_fixture(dir.path());
    // one token per character, keyed by word
    let mut jsonl = String::new();
    let mut seen = std::collections::BTreeSet::new();
    for line in fs::read_to_string(&data).unwrap().lines() {
        let item: serde_json::Value = serde_json::from_str(line).unwrap();
        let word = item["word"].as_str().unwrap().to_string();
        if !seen.insert(word.clone()) {
            continue;
        }
        let spans: Vec<(usize, usize)> = word.char_indices().map(|(i, c)| (i, i + c.len_utf8())).collect();
        let tokens: Vec<String> = word.chars().map(String::from).collect();
        let record = serde_json::json!({"key": word, "word": word, "tokens": tokens, "spans": spans});
        writeln!(jsonl, "{record}").unwrap();
    }
    let pre = dir.path().join("chars.jsonl");
    fs::write(&pre, jsonl).unwrap();
    let out = dir.path().join("scores");
    let run = morphalign(&[
        "score",
        "--dataset",
        s(&data),
        "--pretokenized",
        s(&pre),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = read_json(&out.join("xxx_chars_True_False.json"));
    assert_eq!(report["config"]["context"], "given");
    assert_eq!(report["metrics"]["boundary_recall_macro"], 1.0);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = build_fixture(dir.path());
    let mut csvs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("j{jobs}"));
        let run = morphalign(&[
            "--jobs",
            jobs,
            "score",
            "--dataset",
            s(&data),
            "--tokenizer",
            s(&tokenizer("toy_morph")),
            "--tokenizer",
            s(&tokenizer("toy_pairs")),
            "--out",
            s(&out),
            "--grid",
            "--context",
            "both",
        ]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
        csvs.push(fs::read(out.join("scores.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

const SCORE_HEADER: &str =
    "language,tokenizer,context,frequency_scaling,include_single_token,boundary_precision_macro,boundary_recall_macro";

fn score_csv(rows: &[(&str, &str, bool, bool, f64, f64)]) -> String {
    let mut out = format!("{SCORE_HEADER}\n");
    for (lang, tok, fs, ist, p, r) in rows {
        let b = |v: bool| if v { "True" } else { "False" };
        writeln!(out, "{lang},{tok},leading_space,{},{},{p:.4},{r:.4}", b(*fs), b(*ist)).unwrap();
    }
    out
}

fn run_compare(dir: &Path, a: &str, b: &str) -> serde_json::Value {
    fs::write(dir.join("a.csv"), a).unwrap();
    fs::write(dir.join("b.csv"), b).unwrap();
    let out = dir.join("cmp");
    let run = morphalign(&[
        "compare",
        s(&dir.join("a.csv")),
        s(&dir.join("b.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    read_json(&out.join("ranking.json"))
}

#[test]
fn dominant_tokenizer_ranks_first_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (fs, ist) in [(true, true), (true, false), (false, true), (false, false)] {
        for lang in ["eng", "deu", "fin"] {
            a.push((lang, "A", fs, ist, 0.8, 0.9));
            b.push((lang, "B", fs, ist, 0.5, 0.6));
        }
    }
    let report = run_compare(dir.path(), &score_csv(&a), &score_csv(&b));
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    assert!(cells
        .iter()
        .all(|c| c["ranking"][0]["tokenizer"] == "A" && c["ranking"][0]["rank"] == 1));
    assert_eq!(report["leader_flip"], false);
}

#[test]
fn precision_and_recall_leaders_differ() {
    // best precision and best recall belong to different tokenizers
    let dir = tempfile::tempdir().unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for lang in ["eng", "deu"] {
        a.push((lang, "xglm", true, false, 0.81, 0.80));
        b.push((lang, "llama2", true, false, 0.72, 0.95));
    }
    let report = run_compare(dir.path(), &score_csv(&a), &score_csv(&b));
    assert_eq!(report["leaders"]["True_False/leading_space:precision"], "xglm");
    assert_eq!(report["leaders"]["True_False/leading_space:recall"], "llama2");
    assert_eq!(report["leader_flip"], true);
    assert_eq!(report["rank_changes"].as_array().unwrap().len(), 2);
}

#[test]
fn coverage_mismatch_warns_with_intersection() {
    let dir = tempfile::tempdir().unwrap();
    let a = score_csv(&[("eng", "A", true, false, 0.8, 0.8), ("deu", "A", true, false, 0.8, 0.8)]);
    let b = score_csv(&[("eng", "B", true, false, 0.5, 0.5)]);
    let report = run_compare(dir.path(), &a, &b);
    let warning = report["warnings"][0].as_str().unwrap();
    assert!(warning.contains("[eng]"), "{warning}");
    assert_eq!(report["cells"][0]["languages"], serde_json::json!(["eng"]));
}

#[test]
fn compare_needs_two_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    fs::write(&a, score_csv(&[("eng", "A", true, false, 0.8, 0.8)])).unwrap();
    let run = morphalign(&["compare", s(&a), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("at least two"));
}

struct Synthetic {
    alignment: String,
    performance: String,
}

/// Four tokenizers (one per model) over five languages and two tasks.
fn synthetic(rng: &mut ChaCha8Rng, score: impl Fn(f64, &mut ChaCha8Rng) -> f64) -> Synthetic {
    let models = ["m1", "m2", "m3", "m4"];
    let langs = ["l1", "l2", "l3", "l4", "l5"];
    let mut alignment = format!("{SCORE_HEADER}\n");
    let mut values = std::collections::HashMap::new();
    for m in models {
        for l in langs {
            let v: f64 = rng.gen_range(0.2..0.9);
            values.insert((m, l), v);
            writeln!(alignment, "{l},{m},leading_space,True,False,{v},{v}").unwrap();
        }
    }
    let mut performance = String::from("model,task,language,score,n_params,train_data_proportion\n");
    for (mi, m) in models.iter().enumerate() {
        for task in ["qa", "nli"] {
            for l in langs {
                let a = values[&(*m, l)];
                let prop: f64 = rng.gen_range(0.0..0.5);
                writeln!(
                    performance,
                    "{m},{task},{l},{},{},{prop}",
                    score(a, rng),
                    (mi + 1) * 1000
                )
                .unwrap();
            }
        }
    }
    Synthetic { alignment, performance }
}

fn run_correlate(dir: &Path, data: &Synthetic, metric: &str) -> (i32, String, Option<serde_json::Value>) {
    let a = dir.join("align.csv");
    let p = dir.join("perf.csv");
    let out = dir.join("corr.json");
    fs::write(&a, &data.alignment).unwrap();
    fs::write(&p, &data.performance).unwrap();
    let _ = fs::remove_file(&out);
    let run = morphalign(&[
        "correlate",
        "--alignment",
        s(&a),
        "--performance",
        s(&p),
        "--metric",
        metric,
        "--out",
        s(&out),
    ]);
    let report = out.exists().then(|| read_json(&out));
    (code(&run), stderr(&run), report)
}

#[test]
fn exactly_linear_performance_gives_r_squared_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = synthetic(&mut rng, |a, _| 0.3 + 0.5 * a);
    let (status, err, report) = run_correlate(dir.path(), &data, "recall");
    assert_eq!(status, 0, "{err}");
    let report = report.unwrap();
    assert!((report["full_model"]["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((report["simple_regression"]["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((report["alignment_slope"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(report["f_test"]["p_value"], 0.0);
    assert!(report["method"].as_str().unwrap().contains("task dummy intercepts"));
    assert_eq!(report["rows"]["joined"], 40);
}

#[test]
fn independent_performance_rarely_significant() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut not_significant = 0;
    for _ in 0..100 {
        let data = synthetic(&mut rng, |_, r| r.gen_range(0.0..1.0));
        let (status, err, report) = run_correlate(dir.path(), &data, "precision");
        assert_eq!(status, 0, "{err}");
        if report.unwrap()["f_test"]["p_value"].as_f64().unwrap() > 0.05 {
            not_significant += 1;
        }
    }
    assert!(not_significant >= 90, "{not_significant}/100");
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut data = synthetic(&mut rng, |a, _| a);
    data.performance = data.performance.replacen("n_params", "size", 1);
    let (status, err, _) = run_correlate(dir.path(), &data, "recall");
    assert_eq!(status, 3);
    assert!(err.contains("`n_params`"), "{err}");
}

#[test]
fn missing_proportions_dropped_and_small_join_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut data = synthetic(&mut rng, |a, _| a);
    let mut lines: Vec<String> = data.performance.lines().map(str::to_string).collect();
    // blank out the proportion on all but three rows, all from one model and task
    for line in lines.iter_mut().skip(4) {
        let cut = line.rfind(',').unwrap();
        line.truncate(cut + 1);
        line.push_str("NA");
    }
    data.performance = lines.join("\n") + "\n";
    let (status, err, _) = run_correlate(dir.path(), &data, "recall");
    assert_eq!(status, 3);
    assert!(err.contains("join produced 3 rows"), "{err}");
}
