use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionCounts, MetricsRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// Member acronyms for ensembles, the acronym itself for single models.
    pub composition: String,
    pub counts: ConfusionCounts,
    pub metrics: MetricsRow,
    /// Per-fold breakdown when the row came from cross-validation.
    pub folds: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
    pub sort_keys: Vec<String>,
}

fn key(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NEG_INFINITY)
}

/// bcr descending, then sens, then mean4; undefined sorts last.
pub fn compare_rows(a: &MetricsRow, b: &MetricsRow) -> Ordering {
    key(b.bcr)
        .total_cmp(&key(a.bcr))
        .then_with(|| key(b.sens).total_cmp(&key(a.sens)))
        .then_with(|| key(b.mean4).total_cmp(&key(a.mean4)))
}

/// Stable sort into report order.
pub fn build_report(title: impl Into<String>, mut rows: Vec<ReportRow>) -> EvaluationReport {
    rows.sort_by(|a, b| compare_rows(&a.metrics, &b.metrics));
    EvaluationReport {
        title: title.into(),
        rows,
        sort_keys: ["bcr", "sens", "mean4"].map(String::from).to_vec(),
    }
}

fn cell(v: Option<f64>, places: usize) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.places$}"))
}

impl EvaluationReport {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "label", "members", "acc", "bcr", "sens", "spec", "mean4", "f1", "partial", "tp", "tn", "fp", "fn",
        ])?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                r.label.clone(),
                r.composition.clone(),
                cell(m.acc, 6),
                cell(m.bcr, 6),
                cell(m.sens, 6),
                cell(m.spec, 6),
                cell(m.mean4, 6),
                cell(m.f1, 6),
                m.partial.to_string(),
                r.counts.tp.to_string(),
                r.counts.tn.to_string(),
                r.counts.fp.to_string(),
                r.counts.fn_.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned plain-text table with the usual result columns.
    pub fn to_table(&self) -> String {
        let header = ["Model/Ensemble", "acc", "bcr", "sens", "spec", "Mean"];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                let m = &r.metrics;
                [
                    r.label.clone(),
                    cell(m.acc, 3),
                    cell(m.bcr, 3),
                    cell(m.sens, 3),
                    cell(m.spec, 3),
                    cell(m.mean4, 3),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let line = |out: &mut String, cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header);
        for row in &body {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&mut out, &cells);
        }
        out
    }

    pub fn write(&self, csv_path: impl AsRef<Path>, table_path: impl AsRef<Path>) -> Result<()> {
        let (c, t) = (csv_path.as_ref(), table_path.as_ref());
        std::fs::write(c, self.to_csv()?).map_err(|e| Error::io(c, e))?;
        std::fs::write(t, self.to_table()).map_err(|e| Error::io(t, e))
    }
}
