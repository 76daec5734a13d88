//! Run reports: `report.json` plus one CSV per table, all under one
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, Task};
use crate::runner::{Outcome, Table, Verdict};

pub const SCHEMA: &str = "randhyp-report/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportError {
    pub kind: String,
    pub message: String,
}

/// Everything numeric lives in `payload`; `wall_time_seconds` is the only
/// field that changes between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub version: &'static str,
    pub task: Task,
    pub config: ExperimentConfig,
    pub verdict: Verdict,
    pub exit_code: i32,
    pub payload: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ReportError>,
    pub side_files: Vec<String>,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn new(
        config: &ExperimentConfig,
        result: &randhyp_core::Result<Outcome>,
        wall_time_seconds: f64,
    ) -> Self {
        let (verdict, payload, error, side_files) = match result {
            Ok(o) => (
                o.verdict,
                o.payload.clone(),
                None,
                o.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
            ),
            Err(e) => (
                Verdict::Error,
                Value::Null,
                Some(ReportError {
                    kind: error_kind(e).to_string(),
                    message: e.to_string(),
                }),
                Vec::new(),
            ),
        };
        Self {
            schema: SCHEMA,
            version: VERSION,
            task: config.task,
            config: config.clone(),
            verdict,
            exit_code: verdict.exit_code(),
            payload,
            error,
            side_files,
            wall_time_seconds,
        }
    }
}

fn error_kind(e: &randhyp_core::Error) -> &'static str {
    use randhyp_core::Error::*;
    match e {
        Config { .. } => "config",
        Resource(_) => "resource",
        Contract(_) => "contract",
        Unsupported(_) => "unsupported",
        Range(_) => "range",
    }
}

pub fn write_table(dir: &Path, table: &Table) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&table.headers)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Writes `report.json` and the CSV side files into `dir` (created if needed).
pub fn write_report(dir: &Path, report: &RunReport, tables: &[Table]) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for t in tables {
        write_table(dir, t)?;
    }
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(path)
}
