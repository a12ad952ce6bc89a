//! Evaluation report as an aligned text table and as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvaluationReport;

use super::{read_text, write_text};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub lambda: f64,
    /// Automatic labels scored against ground truth, one row per session.
    pub labelling: Vec<EvaluationReport>,
    /// Voted predictions on the reference map, binarised at the reference
    /// labels' optimal threshold.
    pub predictions: Option<EvaluationReport>,
}

const COLUMNS: [&str; 11] = [
    "map",
    "points",
    "auc",
    "threshold",
    "threshold_m",
    "gmean",
    "applied",
    "miou",
    "iou_stable",
    "iou_dynamic",
    "rmse",
];

fn row(kind: &str, r: &EvaluationReport) -> Vec<String> {
    vec![
        format!("{kind}:{}", r.map),
        r.points.to_string(),
        format!("{:.4}", r.auc),
        format!("{:.4}", r.optimal_threshold),
        r.optimal_threshold_meters.map_or("inf".into(), |m| format!("{m:.3}")),
        format!("{:.4}", r.gmean),
        format!("{:.4}", r.applied_threshold),
        format!("{:.4}", r.miou),
        format!("{:.4}", r.per_class_iou[0]),
        format!("{:.4}", r.per_class_iou[1]),
        r.rmse.map_or("-".into(), |v| format!("{v:.4}")),
    ]
}

pub fn render_report_table(report: &Report) -> String {
    let mut rows: Vec<Vec<String>> = vec![COLUMNS.iter().map(|c| c.to_string()).collect()];
    rows.extend(report.labelling.iter().map(|r| row("labels", r)));
    rows.extend(report.predictions.iter().map(|r| row("predictions", r)));
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("lambda {}\n", report.lambda);
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn report_json(report: &Report) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::param(format!("cannot serialise report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Writes `<stem>.txt` and `<stem>.json` next to each other.
pub fn write_report(stem: impl AsRef<Path>, report: &Report) -> Result<()> {
    let stem = stem.as_ref();
    write_text(&stem.with_extension("txt"), &render_report_table(report))?;
    write_text(&stem.with_extension("json"), &report_json(report)?)
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let r = EvaluationReport {
            map: "s0".into(),
            points: 1200,
            auc: 0.9931234,
            optimal_threshold: 0.269,
            optimal_threshold_meters: Some(0.626),
            gmean: 0.97,
            applied_threshold: 0.269,
            miou: 0.9,
            per_class_iou: [0.95, 0.85],
            rmse: None,
        };
        Report {
            lambda: 0.5,
            labelling: vec![r.clone(), EvaluationReport { map: "s1_long".into(), optimal_threshold_meters: None, ..r.clone() }],
            predictions: Some(EvaluationReport { rmse: Some(0.1), ..r }),
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("report");
        write_report(&stem, &sample()).unwrap();
        assert_eq!(read_report_json(stem.with_extension("json")).unwrap(), sample());
    }

    #[test]
    fn table_is_aligned() {
        let text = render_report_table(&sample());
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(text.contains("0.9931") && text.contains("inf"));
    }
}
