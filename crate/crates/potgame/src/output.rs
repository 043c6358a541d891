//! CSV and JSON output files.
//!
//! Trajectory files have one row per (timestep, type-player) with columns
//! `t, agent, type, p_x, p_y, theta, v, delta, a, probability`; the controls are empty on
//! the final timestep. Metrics files have one row per closed-loop setting.

use std::fs;
use std::io::Write;
use std::path::Path;

use potgame_core::admm::IterationRecord;
use potgame_core::simulation::{RunRecord, RunStatus, SummaryRow, TrajectoryRow};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TRAJECTORY_COLUMNS: [&str; 10] = ["t", "agent", "type", "p_x", "p_y", "theta", "v", "delta", "a", "probability"];

pub const METRICS_COLUMNS: [&str; 9] = [
    "setting",
    "runs",
    "failures",
    "mean_speed_error",
    "mean_position_error",
    "mean_abs_steer",
    "mean_abs_accel",
    "max_abs_accel",
    "min_distance",
];

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(mut out: impl Write, records: &[T]) -> Result<(), CliError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| CliError::io("<diagnostics>", e))?;
    }
    Ok(())
}

pub fn write_trajectories(path: &Path, rows: &[TrajectoryRow]) -> Result<(), CliError> {
    write_csv(path, rows)
}

pub fn write_diagnostics(path: &Path, history: &[IterationRecord]) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_jsonl(std::io::BufWriter::new(f), history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub setting: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_speed_error: f64,
    pub mean_position_error: f64,
    pub mean_abs_steer: f64,
    pub mean_abs_accel: f64,
    pub max_abs_accel: f64,
    pub min_distance: f64,
}

impl From<&SummaryRow> for MetricsRow {
    fn from(s: &SummaryRow) -> Self {
        MetricsRow {
            setting: s.setting.name().into(),
            runs: s.runs,
            failures: s.failures,
            mean_speed_error: s.mean.mean_speed_error,
            mean_position_error: s.mean.mean_position_error,
            mean_abs_steer: s.mean.mean_abs_steer,
            mean_abs_accel: s.mean.mean_abs_accel,
            max_abs_accel: s.mean.max_abs_accel,
            min_distance: s.mean.min_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub condition: usize,
    pub draw: usize,
    pub setting: String,
    pub completed: bool,
    /// Replan step of the stall, for failed runs.
    pub failed_step: Option<usize>,
    pub mean_speed_error: f64,
    pub mean_position_error: f64,
    pub mean_abs_steer: f64,
    pub mean_abs_accel: f64,
    pub max_abs_accel: f64,
    pub min_distance: f64,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        let m = &r.metrics;
        RunRow {
            condition: r.condition,
            draw: r.draw,
            setting: r.setting.name().into(),
            completed: r.status == RunStatus::Completed,
            failed_step: match r.status {
                RunStatus::Failed { step, .. } => Some(step),
                RunStatus::Completed => None,
            },
            mean_speed_error: m.mean_speed_error,
            mean_position_error: m.mean_position_error,
            mean_abs_steer: m.mean_abs_steer,
            mean_abs_accel: m.mean_abs_accel,
            max_abs_accel: m.max_abs_accel,
            min_distance: m.min_distance,
        }
    }
}

/// First line of a CSV file, split on commas.
pub fn csv_header(path: &Path) -> Result<Vec<String>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.headers()?.iter().map(String::from).collect())
}
