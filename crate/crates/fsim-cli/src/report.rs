//! Plot-ready report tables.
//!
//! `emit_report` is a pure function of the run records: the same records
//! always produce byte-identical files. Floats are written with Rust's
//! shortest round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{CellOutcome, RunSeries};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read records {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse records {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("no records to report")]
    Empty,
}

pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RECORDS_FILE: &str = "records.json";

/// Render the per-round series table: one row per (run, round).
pub fn render_series(runs: &[RunSeries]) -> String {
    let mut out = String::from("run_id,C,E,B,seed,round,pr_auc,mu_t,selected_count,wall_time\n");
    for run in runs {
        for record in &run.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                run.run_id,
                run.c,
                run.e,
                run.b,
                run.seed,
                record.round,
                record.pr_auc(),
                record.mu,
                record.selected.len(),
                record.wall_time,
            ));
        }
    }
    out
}

/// Render the per-run summary table with max and mean PR-AUC over rounds.
pub fn render_summary(runs: &[RunSeries]) -> String {
    let mut out = String::from("run_id,C,E,B,seed,rounds,max_pr_auc,mean_pr_auc\n");
    for run in runs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            run.run_id,
            run.c,
            run.e,
            run.b,
            run.seed,
            run.records.len(),
            run.max_pr_auc(),
            run.mean_pr_auc(),
        ));
    }
    out
}

/// Write `series.csv` and `summary.csv` under `dir`. Returns their paths.
pub fn emit_report(runs: &[RunSeries], dir: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
    if runs.is_empty() || runs.iter().all(|r| r.records.is_empty()) {
        return Err(ReportError::Empty);
    }
    let series_path = dir.join(SERIES_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_text(&series_path, &render_series(runs))?;
    write_text(&summary_path, &render_summary(runs))?;
    Ok((series_path, summary_path))
}

fn write_text(path: &Path, content: &str) -> Result<(), ReportError> {
    fs::write(path, content)
        .map_err(|source| ReportError::Write { path: path.to_path_buf(), source })
}

/// Persist raw outcomes as JSON so tables can be regenerated later.
pub fn save_records(outcomes: &[CellOutcome], path: &Path) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(outcomes).expect("outcomes serialize");
    write_text(path, &json)
}

pub fn load_records(path: &Path) -> Result<Vec<CellOutcome>, ReportError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ReportError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| ReportError::Parse { path: path.to_path_buf(), source })
}

/// Successful runs carried by a set of outcomes, in input order.
pub fn successful_runs(outcomes: &[CellOutcome]) -> Vec<RunSeries> {
    outcomes
        .iter()
        .filter_map(|o| match o {
            CellOutcome::Ok(series) => Some(series.clone()),
            CellOutcome::Failed { .. } => None,
        })
        .collect()
}
