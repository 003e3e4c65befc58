use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliResult, Exit, OrExit};

/// Provenance block embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    /// SHA-256 of the canonical JSON form of the run configuration.
    pub config_hash: String,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub timestamp: String,
    pub item_counts: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn new<C: Serialize>(config: &C) -> Self {
        let canonical = serde_json::to_vec(config).expect("config serializes");
        RunManifest {
            command_line: std::env::args().collect(),
            config_hash: hex::encode(Sha256::digest(&canonical)),
            inputs: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
            item_counts: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let digest = file_digest(path).or_exit_with(Exit::Io, || format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }
}

/// Honors SOURCE_DATE_EPOCH so runs can be made byte-reproducible.
fn timestamp() -> String {
    let at = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    at.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
