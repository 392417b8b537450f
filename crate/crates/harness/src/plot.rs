//! Tab-separated tables for external plotting.
//!
//! Curve tables have a `step` column followed by one column per series; a
//! series missing a step leaves its cell empty. The entropy table adds a
//! `{series}_stop` column holding 1 on the row of the trigger step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{Map, Value};

use crate::metrics::MetricsRecord;
use crate::report::summarize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlotKind {
    Reward,
    Entropy,
    Length,
    WallClock,
    /// One row per series: steps and rollouts to reach `target`.
    Efficiency { target: f64, window: usize },
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::Reward => "reward",
            PlotKind::Entropy => "entropy",
            PlotKind::Length => "length",
            PlotKind::WallClock => "wall_clock",
            PlotKind::Efficiency { .. } => "efficiency",
        }
    }

    fn column(&self) -> &'static str {
        match self {
            PlotKind::Reward | PlotKind::Efficiency { .. } => "mean_reward",
            PlotKind::Entropy => "entropy",
            PlotKind::Length => "mean_response_length",
            PlotKind::WallClock => "wall_clock_ms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlotError {
    #[error("series `{series}` has no column `{column}` (line {line})")]
    MissingColumn { series: String, column: String, line: usize },
    #[error("series `{series}`, line {line}: column `{column}` is not numeric")]
    NotNumeric { series: String, column: String, line: usize },
}

/// A named metrics stream, as raw JSON objects.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub rows: Vec<Map<String, Value>>,
}

fn number(series: &Series, line: usize, row: &Map<String, Value>, column: &str) -> Result<f64, PlotError> {
    let value = row.get(column).ok_or_else(|| PlotError::MissingColumn {
        series: series.name.clone(),
        column: column.to_string(),
        line,
    })?;
    value.as_f64().ok_or_else(|| PlotError::NotNumeric {
        series: series.name.clone(),
        column: column.to_string(),
        line,
    })
}

fn step_of(series: &Series, line: usize, row: &Map<String, Value>) -> Result<u64, PlotError> {
    number(series, line, row, "step").map(|s| s as u64)
}

pub fn render(series: &[Series], kind: PlotKind) -> Result<String, PlotError> {
    match kind {
        PlotKind::Efficiency { target, window } => efficiency_table(series, target, window),
        _ => curve_table(series, kind),
    }
}

fn curve_table(series: &[Series], kind: PlotKind) -> Result<String, PlotError> {
    let with_stop = kind == PlotKind::Entropy;
    let column = kind.column();
    let mut table: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    let width = series.len() * if with_stop { 2 } else { 1 };

    for (i, s) in series.iter().enumerate() {
        let mut stop = None;
        for (n, row) in s.rows.iter().enumerate() {
            let step = step_of(s, n + 1, row)?;
            let value = number(s, n + 1, row, column)?;
            let cells = table.entry(step).or_insert_with(|| vec![String::new(); width]);
            let col = if with_stop { 2 * i } else { i };
            cells[col] = value.to_string();
            if let Some(v) = row.get("stop_step").and_then(Value::as_u64) {
                stop = Some(v);
            }
        }
        if with_stop {
            for (&step, cells) in table.iter_mut() {
                if !cells[2 * i].is_empty() {
                    cells[2 * i + 1] = if Some(step) == stop { "1" } else { "0" }.to_string();
                }
            }
        }
    }

    let mut out = String::from("step");
    for s in series {
        out.push('\t');
        out.push_str(&s.name);
        if with_stop {
            let _ = write!(out, "\t{}_stop", s.name);
        }
    }
    out.push('\n');
    for (step, cells) in table {
        let _ = write!(out, "{step}");
        for c in cells {
            out.push('\t');
            out.push_str(&c);
        }
        out.push('\n');
    }
    Ok(out)
}

fn efficiency_table(series: &[Series], target: f64, window: usize) -> Result<String, PlotError> {
    let mut out = String::from("series\tsteps_to_target\trollouts_to_target\tfinal_smoothed_reward\n");
    for s in series {
        let mut records = Vec::with_capacity(s.rows.len());
        for (n, row) in s.rows.iter().enumerate() {
            let line = n + 1;
            records.push(MetricsRecord {
                step: step_of(s, line, row)? as usize,
                alpha: 0.0,
                entropy: 0.0,
                zscore: None,
                mean_reward: number(s, line, row, "mean_reward")?,
                mean_response_length: 0.0,
                loss: 0.0,
                cumulative_rollouts: number(s, line, row, "cumulative_rollouts")? as u64,
                wall_clock_ms: None,
                stop_step: None,
            });
        }
        let summary = summarize(&records, target, window);
        let (steps, rollouts) = match &summary.hit {
            Some(h) => (h.step.to_string(), h.rollouts.to_string()),
            None => ("not_reached".to_string(), "not_reached".to_string()),
        };
        let last = summary.final_smoothed_reward.map_or(String::new(), |r| r.to_string());
        let _ = writeln!(out, "{}\t{steps}\t{rollouts}\t{last}", s.name);
    }
    Ok(out)
}
