use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliResult, Exit, OrExit};

pub fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).or_exit_with(Exit::Io, || format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

pub fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    create_parent(path)?;
    let file = File::create(path).or_exit_with(Exit::Io, || format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value).or_exit(Exit::Io)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .or_exit_with(Exit::Io, || format!("writing {}", path.display()))
}

/// `<dir>/<stem>.stats.json` for a dataset at `<dir>/<stem>.jsonl`.
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("stats.json")
}

pub fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

pub fn parse_py_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "True" | "true" | "1" => Some(true),
        "False" | "false" | "0" => Some(false),
        _ => None,
    }
}

pub fn fixed4(v: f64) -> String {
    format!("{v:.4}")
}
