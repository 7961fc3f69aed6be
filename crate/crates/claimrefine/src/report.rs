//! Collects stored metrics from a run directory into one table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use claimrefine_core::metrics::{ClassificationReport, LengthReport, SimilarityReport};
use claimrefine_core::Label;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::orchestrator::{iteration_dir, InputVariant};

/// Shown in the text table where a file is missing.
pub const ABSENT: &str = "-";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: InputVariant,
    pub classification: Option<ClassificationReport>,
    pub similarity: Option<SimilarityReport>,
    pub lengths: Option<LengthReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}: no baselines or iterations found")]
    Empty(PathBuf),
}

fn optional<T: DeserializeOwned>(path: PathBuf) -> Result<Option<T>, IoError> {
    if path.exists() {
        io::read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn row(variant: InputVariant, dir: &Path) -> Result<Option<ReportRow>, IoError> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let r = ReportRow {
        variant,
        classification: optional(dir.join("classification.json"))?,
        similarity: optional(dir.join("similarity.json"))?,
        lengths: optional(dir.join("lengths.json"))?,
    };
    let any = r.classification.is_some() || r.similarity.is_some() || r.lengths.is_some();
    Ok(any.then_some(r))
}

/// Baselines first, then iterations in order.
pub fn collect(run_dir: &Path) -> Result<RunReport, ReportError> {
    let mut rows = Vec::new();
    for v in InputVariant::BASELINES {
        if let Some(r) = row(v, &run_dir.join("baselines").join(v.dir_name()))? {
            rows.push(r);
        }
    }
    let mut i = 0;
    while let Some(r) = row(InputVariant::DpoIteration(i), &iteration_dir(run_dir, i))? {
        rows.push(r);
        i += 1;
    }
    if rows.is_empty() {
        return Err(ReportError::Empty(run_dir.to_path_buf()));
    }
    Ok(RunReport { rows })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:.4}"))
}

impl RunReport {
    pub fn to_table(&self) -> String {
        let header = [
            "variant", "wF1", "F1(S)", "F1(R)", "F1(N)", "acc", "len", "len_sd", "BLEU", "METEOR", "TER",
        ];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let c = r.classification.as_ref();
            let f1 = |l: Label| c.and_then(|c| c.per_class.get(&l)).map(|s| s.f1);
            lines.push(vec![
                r.variant.to_string(),
                cell(c.map(|c| c.weighted_f1)),
                cell(f1(Label::Supported)),
                cell(f1(Label::Refuted)),
                cell(f1(Label::Neutral)),
                cell(c.map(|c| c.accuracy)),
                cell(r.lengths.map(|l| l.mean_words)),
                cell(r.lengths.map(|l| l.std_words)),
                cell(r.similarity.map(|s| s.mean_bleu)),
                cell(r.similarity.map(|s| s.mean_meteor)),
                cell(r.similarity.map(|s| s.mean_ter)),
            ]);
        }
        let widths: Vec<usize> =
            (0..header.len()).map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(j, s)| if j == 0 { format!("{s:<w$}", w = widths[j]) } else { format!("{s:>w$}", w = widths[j]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Writes `report.json` and `report.txt` into the run directory.
pub fn write(run_dir: &Path) -> Result<RunReport, ReportError> {
    let report = collect(run_dir)?;
    io::write_json(&run_dir.join("report.json"), &report)?;
    io::write_atomic(&run_dir.join("report.txt"), report.to_table().as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(collect(dir.path()), Err(ReportError::Empty(_))));
    }

    #[test]
    fn missing_files_render_as_absent() {
        let dir = tempfile::tempdir().unwrap();
        let lengths = LengthReport { mean_words: 4.0, std_words: 0.5 };
        io::write_json(&dir.path().join("baselines/seed/lengths.json"), &lengths).unwrap();
        let r = collect(dir.path()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].similarity.is_none());
        let table = r.to_table();
        let seed_line = table.lines().nth(1).unwrap();
        assert!(seed_line.starts_with("seed"));
        assert!(seed_line.contains("4.0000"));
        assert_eq!(seed_line.split_whitespace().filter(|c| *c == ABSENT).count(), 8);
    }
}
