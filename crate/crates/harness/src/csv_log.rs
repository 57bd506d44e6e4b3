//! Trajectory CSV: one row per (outer step, warm-up iteration).
//!
//! Step-level columns (`angle_*`, `gd_norm`) are filled on the first row of
//! each outer step and left empty on the rest, so filtering on `j == 0`
//! yields one row per step. Unguided steps have a single row with empty
//! inner columns.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use spgd::diagnostics::{InnerRecord, StepRecord, TrajectoryLog};

use crate::error::{HarnessError, Result};

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "t",
    "j",
    "L_t",
    "alpha_j",
    "angle_gl_gd_deg",
    "angle_gl_prev_deg",
    "angle_gd_prev_deg",
    "gl_norm",
    "gd_norm",
];

/// Twelve significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn row(step: &StepRecord<f64>, inner: Option<&InnerRecord<f64>>, first: bool) -> [String; 9] {
    let step_level = |v: Option<f64>| if first { cell(v) } else { String::new() };
    [
        step.outer_t.to_string(),
        inner.map(|r| r.j.to_string()).unwrap_or_default(),
        cell(inner.map(|r| r.objective)),
        cell(inner.and_then(|r| r.alpha)),
        step_level(step.angle_gl_gd_deg),
        step_level(step.angle_gl_prev_deg),
        step_level(step.angle_gd_prev_deg),
        cell(inner.map(|r| r.raw_gradient_norm)),
        step_level(Some(step.denoise_norm)),
    ]
}

pub fn write_trajectory_csv(log: &TrajectoryLog<f64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let wrap = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    w.write_record(TRAJECTORY_COLUMNS).map_err(wrap)?;
    for step in &log.steps {
        if step.inner.is_empty() {
            w.write_record(row(step, None, true)).map_err(wrap)?;
        }
        for (k, inner) in step.inner.iter().enumerate() {
            w.write_record(row(step, Some(inner), k == 0)).map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Parsed CSV row; empty cells are `None`.
pub type TrajectoryRow = [Option<f64>; 9];

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let wrap = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    let header: Vec<String> = r.headers().map_err(wrap)?.iter().map(str::to_owned).collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(HarnessError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected trajectory header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(wrap)?;
        let mut out: TrajectoryRow = [None; 9];
        for (slot, field) in out.iter_mut().zip(rec.iter()) {
            if !field.is_empty() {
                *slot = Some(field.parse().map_err(|_| HarnessError::Format {
                    path: path.to_path_buf(),
                    message: format!("non-numeric cell {field:?}"),
                })?);
            }
        }
        rows.push(out);
    }
    Ok(rows)
}
