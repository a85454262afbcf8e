use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use vaps_core::eval::{format_table, MetricReport};

use crate::PipelineError;

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub label: String,
    pub report: MetricReport,
}

/// Reads each `(label, metrics.json)` pair.
pub fn collect_reports(sources: &[(String, PathBuf)]) -> Result<Vec<ReportRow>, PipelineError> {
    sources
        .iter()
        .map(|(label, path)| {
            if !path.exists() {
                return Err(PipelineError::Missing {
                    path: path.clone(),
                    stage: "eval",
                });
            }
            let text = fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
            let report = serde_json::from_str(&text)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
            Ok(ReportRow {
                label: label.clone(),
                report,
            })
        })
        .collect()
}

/// Every `<dir>/*/reports/metrics.json` under `dir`, labeled by subdirectory name.
pub fn discover(dir: &Path) -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let m = e.path().join("reports").join("metrics.json");
            if m.exists() {
                out.push((e.file_name().to_string_lossy().into_owned(), m));
            }
        }
    }
    out.sort();
    out
}

/// Comparison table plus a line for every row whose NDCG@10 beats the
/// row labeled `reference`.
pub fn render_report(rows: &[ReportRow], reference: &str) -> String {
    let pairs: Vec<(String, &MetricReport)> = rows.iter().map(|r| (r.label.clone(), &r.report)).collect();
    let mut s = format_table(&pairs);
    if let Some(base) = rows.iter().find(|r| r.label == reference) {
        let b = base.report.ndcg10();
        for r in rows.iter().filter(|r| r.label != reference) {
            let v = r.report.ndcg10();
            if v > b {
                let _ = writeln!(s, "INVERTED: {} NDCG@10 {v:.4} > {reference} {b:.4}", r.label);
            }
        }
    }
    s
}
