//! Markdown summary of whatever sweep outputs exist in a directory.

use std::fmt::Write;
use std::fs::File;
use std::path::{Path, PathBuf};

use reach_core::metrics::{self, Stats};

use crate::error::{AtStage, Stage, StageResult};
use crate::sweep::{self, SweepKind, TableOneRow, TrialRow, TABLE_ONE_FILE};

pub const REPORT_FILE: &str = "report.md";

/// Per-value aggregate of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSummary {
    pub value: String,
    pub trials: usize,
    pub successes: usize,
    pub executed: usize,
    pub jerk: Option<Stats<f64>>,
    pub error: Option<Stats<f64>>,
}

impl ValueSummary {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Groups rows by `param_value`, keeping first-seen order.
pub fn summarize_rows(rows: &[TrialRow]) -> Vec<ValueSummary> {
    let mut values: Vec<&str> = Vec::new();
    for r in rows {
        if !values.contains(&r.param_value.as_str()) {
            values.push(&r.param_value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let group: Vec<&TrialRow> = rows.iter().filter(|r| r.param_value == v).collect();
            let done: Vec<&&TrialRow> = group.iter().filter(|r| r.executed()).collect();
            let jerk: Vec<f64> = done.iter().map(|r| r.norm_jerk).collect();
            let err: Vec<f64> = done.iter().map(|r| r.ee_error).collect();
            ValueSummary {
                value: v.to_string(),
                trials: group.len(),
                successes: group.iter().filter(|r| r.success).count(),
                executed: done.len(),
                jerk: metrics::stats(&jerk),
                error: metrics::stats(&err),
            }
        })
        .collect()
}

fn fmt_stats(s: &Option<Stats<f64>>) -> String {
    match s {
        Some(s) => format!("{:.4e} | {:.4e} | {:.4e}", s.median, s.mean, s.std),
        None => "- | - | -".to_string(),
    }
}

pub fn table_one_markdown(rows: &[TableOneRow]) -> String {
    let mut out = String::from(
        "| train size | train RMSE | test RMSE | explained variance | epochs |\n|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {:.4e} | {:.4e} | {:.4} | {} |",
            r.train_size, r.train_rmse, r.test_rmse, r.explained_variance, r.epochs_run
        );
    }
    out
}

pub fn sweep_markdown(kind: SweepKind, rows: &[TrialRow]) -> String {
    let mut out = format!(
        "| {kind} | trials | success | executed | jerk median | jerk mean | jerk std | error median | error mean | error std |\n|---|---|---|---|---|---|---|---|---|---|\n"
    );
    for s in summarize_rows(rows) {
        let _ = writeln!(
            out,
            "| {} | {} | {:.1}% | {} | {} | {} |",
            s.value,
            s.trials,
            100.0 * s.success_rate(),
            s.executed,
            fmt_stats(&s.jerk),
            fmt_stats(&s.error)
        );
    }
    out
}

/// Builds the report text from the CSV files under `dir`. Missing files are skipped.
pub fn build_report(dir: &Path) -> StageResult<String> {
    let mut out = String::from("# Reaching experiment report\n\n");
    out.push_str("Metrics are over executed trials (failed plans included); success counts every trial.\n\n");
    let t1 = dir.join(TABLE_ONE_FILE);
    out.push_str("## Autoencoder accuracy by training-set size\n\n");
    if t1.exists() {
        let rows: Vec<TableOneRow> = sweep::read_records(File::open(&t1).at(Stage::Report)?)?;
        out.push_str(&table_one_markdown(&rows));
    } else {
        out.push_str("No train_size sweep found.\n");
    }
    for kind in SweepKind::ALL {
        let path = sweep::csv_path(dir, kind);
        if !path.exists() {
            continue;
        }
        let rows = sweep::read_rows(File::open(&path).at(Stage::Report)?)?;
        let _ = write!(out, "\n## Sweep: {kind}\n\n");
        out.push_str(&sweep_markdown(kind, &rows));
    }
    Ok(out)
}

pub fn write_report(dir: &Path) -> StageResult<PathBuf> {
    let text = build_report(dir)?;
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, text).at(Stage::Report)?;
    Ok(path)
}
