//! Metrics files: one JSON object per line, one file per (strategy, stream).
//! Wall-clock times live in separate `.timings` files so that metrics stay
//! byte-identical across reruns.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub strategy: String,
    pub stream: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Test accuracy after each experience (a single entry for joint
    /// training or when only the final evaluation was requested).
    pub trajectory: Vec<f64>,
    pub final_accuracy: Option<f64>,
    pub n_experiences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub run_log: Vec<String>,
}

/// Wall-clock seconds per training experience of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub strategy: String,
    pub stream: String,
    pub seed: u64,
    pub seconds: Vec<f64>,
}

/// File stem shared by the metrics and timings files of a cell.
pub fn cell_stem(strategy: &str, stream: &str) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect::<String>()
    };
    format!("{}__{}", clean(strategy), clean(stream))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records serialize");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Writes the records grouped into `<strategy>__<stream>.rec` files (records
/// keep their given order) and returns the paths written.
pub fn write_records(dir: &Path, records: &[MetricsRecord]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut groups: std::collections::BTreeMap<String, Vec<&MetricsRecord>> = Default::default();
    for r in records {
        groups.entry(cell_stem(&r.strategy, &r.stream)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(stem, recs)| {
            let path = dir.join(format!("{stem}.rec"));
            write_lines(&path, &recs)?;
            Ok(path)
        })
        .collect()
}

pub fn write_timings(dir: &Path, timings: &[Timing]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut groups: std::collections::BTreeMap<String, Vec<&Timing>> = Default::default();
    for t in timings {
        groups.entry(cell_stem(&t.strategy, &t.stream)).or_default().push(t);
    }
    for (stem, items) in groups {
        write_lines(&dir.join(format!("{stem}.timings")), &items)?;
    }
    Ok(())
}

/// Reads every record of a metrics file; errors carry the byte offset of
/// the offending line.
pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_records(&text)
}

pub fn parse_records(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        if !body.is_empty() {
            let rec: MetricsRecord = serde_json::from_str(body).map_err(|e| Error::Parse {
                offset: offset + e.column().saturating_sub(1),
                message: e.to_string(),
            })?;
            if rec.trajectory.iter().chain(&rec.final_accuracy).any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::Parse {
                    offset,
                    message: "accuracy outside [0, 1]".into(),
                });
            }
            out.push(rec);
        }
        offset += line.len();
    }
    Ok(out)
}
