//! Persisted run records, one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HyperParams;
use crate::error::{Error, Result};
use crate::trainer::EpochStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    pub hp: HyperParams,
    pub seed: u64,
    pub param_count: usize,
    pub status: RunStatus,
    /// Completed epochs in order; shorter than `hp.epochs` only if diverged.
    pub epochs: Vec<EpochStats>,
}

#[derive(Serialize)]
struct IdKey<'a> {
    hp: &'a HyperParams,
    seed: u64,
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of `(hp, seed)`.
pub fn run_id(hp: &HyperParams, seed: u64) -> String {
    let key = serde_json::to_string(&IdKey { hp, seed }).expect("hyperparameters serialize");
    Sha256::digest(key.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse {
            location: format!("column {}", e.column()),
            message: e.to_string(),
        })
    }
}

/// Parse a JSONL document; blank lines are ignored.
pub fn parse_records(doc: &str) -> Result<Vec<RunRecord>> {
    doc.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                location: format!("line {}, column {}", i + 1, e.column()),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn serialize_records(records: &[RunRecord]) -> String {
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("{}:{}:{}", path.display(), i + 1, e.column()),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Append one record as a single line and flush it to disk.
pub fn append_record(file: &mut File, path: &Path, record: &RunRecord) -> Result<()> {
    let mut line = record.to_json_line();
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.sync_data().map_err(|e| Error::io(path, e))
}
