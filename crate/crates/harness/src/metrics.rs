//! Line-delimited JSON metrics, one object per training step.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sfpo::StepTrace;

/// One step of a run. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub alpha: f64,
    pub entropy: f64,
    /// `null` while the entropy window is filling.
    pub zscore: Option<f64>,
    pub mean_reward: f64,
    pub mean_response_length: f64,
    pub loss: f64,
    pub cumulative_rollouts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
    /// Present only on the line whose entropy fired the trigger; holds the
    /// first step run with the downgraded factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_step: Option<usize>,
}

impl MetricsRecord {
    pub fn from_trace(trace: &StepTrace, cumulative_rollouts: u64, wall_clock_ms: Option<f64>) -> Self {
        Self {
            step: trace.step_index,
            alpha: trace.alpha_used,
            entropy: trace.entropy,
            zscore: trace.zscore,
            mean_reward: trace.mean_reward,
            mean_response_length: trace.mean_response_length,
            loss: trace.loss_after,
            cumulative_rollouts,
            wall_clock_ms,
            stop_step: trace.stop_step,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io { path: path.display().to_string(), source }
}

pub fn to_line(record: &MetricsRecord) -> String {
    serde_json::to_string(record).expect("metrics records always serialize")
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), MetricsError> {
    let mut out = BufWriter::new(File::create(path).map_err(io(path))?);
    for r in records {
        writeln!(out, "{}", to_line(r)).map_err(io(path))?;
    }
    out.flush().map_err(io(path))
}

/// Reads each line as a raw JSON object, for consumers that look up columns by name.
pub fn read_objects(path: &Path) -> Result<Vec<serde_json::Map<String, serde_json::Value>>, MetricsError> {
    let file = File::open(path).map_err(io(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match value {
            serde_json::Value::Object(map) => rows.push(map),
            _ => {
                return Err(MetricsError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: "expected a JSON object".into(),
                })
            }
        }
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, MetricsError> {
    read_objects(path)?
        .into_iter()
        .enumerate()
        .map(|(i, map)| {
            serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| MetricsError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
