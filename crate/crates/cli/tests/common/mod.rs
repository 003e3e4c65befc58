#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn treebank() -> PathBuf {
    fixtures().join("treebank")
}

pub fn tokenizer(name: &str) -> PathBuf {
    fixtures().join(format!("{name}.json"))
}

pub fn morphalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphalign"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("MORPHALIGN_JOBS")
        .output()
        .expect("binary runs")
}

pub fn s(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Builds the fixture dataset into `dir` and returns the JSONL path.
pub fn build_fixture(dir: &Path) -> PathBuf {
    let out = dir.join("xxx.jsonl");
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
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
