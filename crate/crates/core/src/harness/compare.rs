//! Aggregation of metrics records into a ranking table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::records::{MetricsRecord, RunStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    /// Mean final accuracy per stream (same order as the table's streams);
    /// `None` when the strategy has no successful run on that stream.
    pub cells: Vec<Option<f64>>,
    /// Mean over the present cells.
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub streams: Vec<String>,
    /// Best average first; ties broken by strategy id.
    pub rows: Vec<ComparisonRow>,
}

/// Successful final accuracies per (strategy, stream), in seed order.
pub fn final_accuracies(records: &[MetricsRecord]) -> BTreeMap<(String, String), Vec<f64>> {
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.strategy, &a.stream, a.seed)
            .cmp(&(&b.strategy, &b.stream, b.seed))
            .then_with(|| {
                let acc = |r: &MetricsRecord| r.final_accuracy.unwrap_or(f64::NEG_INFINITY);
                acc(a).total_cmp(&acc(b))
            })
    });
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in sorted {
        if let (RunStatus::Ok, Some(acc)) = (r.status, r.final_accuracy) {
            cells.entry((r.strategy.clone(), r.stream.clone())).or_default().push(acc);
        }
    }
    cells
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// The result does not depend on record order.
pub fn compare(records: &[MetricsRecord]) -> ComparisonTable {
    let cells = final_accuracies(records);
    let streams: Vec<String> = records
        .iter()
        .map(|r| r.stream.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let strategies: BTreeSet<&String> = records.iter().map(|r| &r.strategy).collect();
    let mut rows: Vec<ComparisonRow> = strategies
        .into_iter()
        .map(|s| {
            let row: Vec<Option<f64>> = streams
                .iter()
                .map(|st| {
                    cells
                        .get(&(s.clone(), st.clone()))
                        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect();
            let present: Vec<f64> = row.iter().flatten().copied().collect();
            let average = if present.is_empty() {
                f64::NAN
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            };
            ComparisonRow {
                strategy: s.clone(),
                cells: row,
                average,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &ComparisonRow| if r.average.is_nan() { f64::NEG_INFINITY } else { r.average };
        key(b).total_cmp(&key(a)).then_with(|| a.strategy.cmp(&b.strategy))
    });
    ComparisonTable { streams, rows }
}

impl ComparisonTable {
    /// Fixed-width text table with accuracies in percent; absent cells
    /// print as `-`.
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) if !x.is_nan() => format!("{:.2}", 100.0 * x),
            _ => "-".to_string(),
        };
        let mut header = vec!["strategy".to_string()];
        header.extend(self.streams.iter().cloned());
        header.push("average".into());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.strategy.clone()];
                line.extend(r.cells.iter().map(|c| fmt(*c)));
                line.push(fmt(Some(r.average)));
                line
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|l| l[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cols: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cols.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
