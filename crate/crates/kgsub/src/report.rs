//! Metric tables in JSON and aligned plain text.

use kgsub_core::eval::Metrics;
use kgsub_core::{RankingReport, SchemeKind};
use serde::{Deserialize, Serialize};

/// Metric column headers, in order.
pub const COLUMNS: [&str; 4] = ["MRR", "Hits@1", "Hits@3", "Hits@10"];

/// Renders one row per `(label, metrics)`; the first column holds the labels
/// under `label_header`, the rest are [`COLUMNS`] with four decimals.
pub fn metrics_table(label_header: &str, rows: &[(String, Metrics)]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|(label, m)| {
            [
                label.clone(),
                format!("{:.4}", m.mrr),
                format!("{:.4}", m.hits_at_1),
                format!("{:.4}", m.hits_at_3),
                format!("{:.4}", m.hits_at_10),
            ]
        })
        .collect();
    let header = [label_header, COLUMNS[0], COLUMNS[1], COLUMNS[2], COLUMNS[3]];
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: [&str; 5]| {
        let mut s = format!("{:<w$}", row[0], w = widths[0]);
        for (c, w) in row[1..].iter().zip(&widths[1..]) {
            s.push_str(&format!("  {c:>w$}"));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
    }
    out
}

/// Output of `kgsub eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub report: RankingReport,
}

impl EvalReport {
    pub fn text(&self) -> String {
        let r = &self.report;
        metrics_table(
            "Direction",
            &[("both".into(), r.overall), ("tail".into(), r.tail), ("head".into(), r.head)],
        )
    }
}

/// One trained scheme in a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub scheme: SchemeKind,
    pub seed: u64,
    pub best_step: Option<u64>,
    pub valid: Option<Metrics>,
    pub test: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// One table per split that has results; rows are labelled by scheme
    /// (and seed when more than one seed was run).
    pub fn text(&self) -> String {
        let seeds: std::collections::BTreeSet<u64> = self.rows.iter().map(|r| r.seed).collect();
        let label = |r: &CompareRow| {
            if seeds.len() > 1 {
                format!("{} (seed {})", r.scheme.label(), r.seed)
            } else {
                r.scheme.label().to_string()
            }
        };
        let mut out = String::new();
        for (split, pick) in [("valid", 0), ("test", 1)] {
            let rows: Vec<(String, Metrics)> = self
                .rows
                .iter()
                .filter_map(|r| if pick == 0 { r.valid } else { r.test }.map(|m| (label(r), m)))
                .collect();
            if rows.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{split}]\n"));
            out.push_str(&metrics_table("Scheme", &rows));
        }
        out
    }
}
