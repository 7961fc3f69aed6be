//! Dataset and tweet-store files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use claimrefine_core::data::{ClaimRecord, DataError, Dataset, Split, TweetRecord};
use claimrefine_core::Label;
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    /// `{id, seed_claim, evidence, gold_label, split}` with canonical labels.
    Native,
    /// `{id, claim, evidence, label, split}` with labels mapped through a
    /// [`LabelMap`]. Numeric ids are accepted.
    HealthverLike,
}

pub const LABEL_MAP_VERSION: u32 = 1;
pub const DEFAULT_LABEL_MAP: &str = include_str!("../config/label_map.toml");

/// Versioned table from dataset label strings to verdict labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub version: u32,
    pub labels: BTreeMap<String, Label>,
}

impl LabelMap {
    pub fn parse(text: &str) -> Result<LabelMap, String> {
        let map: LabelMap = toml::from_str(text).map_err(|e| e.to_string())?;
        if map.version != LABEL_MAP_VERSION {
            return Err(format!("unsupported label map version {} (expected {LABEL_MAP_VERSION})", map.version));
        }
        if map.labels.is_empty() {
            return Err("label map is empty".into());
        }
        for label in Label::ALL {
            if !map.labels.values().any(|l| *l == label) {
                return Err(format!("label map never produces {label}"));
            }
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<LabelMap, LoadError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::fs(path, e))?;
        LabelMap::parse(&text).map_err(|message| LoadError::Io(IoError::Format { path: path.to_path_buf(), message }))
    }

    pub fn get(&self, raw: &str) -> Option<Label> {
        self.labels.get(raw.trim()).copied()
    }
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap::parse(DEFAULT_LABEL_MAP).expect("bundled label map is valid")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown label {value:?}")]
    UnknownLabel { line: usize, value: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: DataError },
    #[error("duplicate claim id {0:?}")]
    DuplicateId(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeLine {
    id: String,
    seed_claim: String,
    evidence: String,
    gold_label: String,
    split: String,
}

#[derive(Deserialize)]
struct HealthverLine {
    id: serde_json::Value,
    claim: String,
    evidence: String,
    label: String,
    split: String,
}

fn parse_line(line: &str, lineno: usize, schema: Schema, labels: &LabelMap) -> Result<ClaimRecord, LoadError> {
    let perr = |e: serde_json::Error| LoadError::Parse { line: lineno, message: e.to_string() };
    let (id, claim, evidence, label, split) = match schema {
        Schema::Native => {
            let r: NativeLine = serde_json::from_str(line).map_err(perr)?;
            let label = Label::from_str(r.gold_label.trim())
                .map_err(|_| LoadError::UnknownLabel { line: lineno, value: r.gold_label.clone() })?;
            (r.id, r.seed_claim, r.evidence, label, r.split)
        }
        Schema::HealthverLike => {
            let r: HealthverLine = serde_json::from_str(line).map_err(perr)?;
            let id = match r.id {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                other => {
                    return Err(LoadError::Parse { line: lineno, message: format!("id must be a string or number, got {other}") })
                }
            };
            let label = labels.get(&r.label).ok_or(LoadError::UnknownLabel { line: lineno, value: r.label.clone() })?;
            (id, r.claim, r.evidence, label, r.split)
        }
    };
    let split = Split::from_str(&split).map_err(|source| LoadError::Invalid { line: lineno, source })?;
    let rec = ClaimRecord { id, seed_claim: claim, evidence, gold_label: label, split };
    rec.validate().map_err(|source| LoadError::Invalid { line: lineno, source })?;
    Ok(rec)
}

/// Reads a line-delimited dataset file and validates every record.
pub fn load_dataset(path: &Path, schema: Schema, labels: &LabelMap) -> Result<Dataset, LoadError> {
    let file = fs::File::open(path).map_err(|e| IoError::fs(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::fs(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(&line, i + 1, schema, labels)?);
    }
    let dataset = Dataset::from_records(records).map_err(|e| match e {
        DataError::DuplicateId(id) => LoadError::DuplicateId(id),
        other => LoadError::Invalid { line: 0, source: other },
    })?;
    let counts = dataset.split_counts();
    log::info!(
        "loaded {} records from {} (train {}, dev {}, test {})",
        dataset.len(),
        path.display(),
        counts.get(&Split::Train).unwrap_or(&0),
        counts.get(&Split::Dev).unwrap_or(&0),
        counts.get(&Split::Test).unwrap_or(&0)
    );
    Ok(dataset)
}

/// Writes records in the native schema.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), IoError> {
    io::write_jsonl(path, dataset.records())
}

pub fn save_tweets(path: &Path, tweets: &[TweetRecord]) -> Result<(), IoError> {
    io::write_jsonl(path, tweets)
}

/// Loads a tweet store and checks it against `dataset`.
pub fn load_tweets(path: &Path, dataset: &Dataset) -> Result<Vec<TweetRecord>, LoadError> {
    let tweets: Vec<TweetRecord> = io::read_jsonl(path)?;
    claimrefine_core::data::index_tweets(dataset, &tweets).map_err(|source| LoadError::Invalid { line: 0, source })?;
    Ok(tweets)
}
