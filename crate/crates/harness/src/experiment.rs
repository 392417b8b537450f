//! Seeded runs: one training run per seed, each streamed to `seed{N}.jsonl`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sfpo::{make_task, SfpoError, ToyPolicy, Trainer};

use crate::config::{ConfigError, RunConfig};
use crate::metrics::{write_metrics, MetricsError, MetricsRecord};

/// File name of the resolved configuration written next to the metrics.
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("output directory {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("seed {seed}: {error} (after {steps_completed} steps; partial metrics kept)")]
    Training { seed: u64, steps_completed: usize, error: SfpoError },
}

pub fn metrics_file_name(seed: u64) -> String {
    format!("seed{seed}.jsonl")
}

/// A finished or aborted run's records.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub error: Option<SfpoError>,
}

/// Runs one seed in memory.
pub fn run_seed(config: &RunConfig, seed: u64) -> Result<SeedRun, ExperimentError> {
    config.validate()?;
    let training = config.training_config(seed);
    let task_seed = config.task.seed.unwrap_or(seed);
    let setup = make_task(config.task.kind.name(), &config.task.knobs, task_seed)
        .and_then(|task| config.scheduler_for(&training).map(|s| (task, s)));
    let (task, scheduler) = match setup {
        Ok(v) => v,
        Err(error) => return Err(ExperimentError::Training { seed, steps_completed: 0, error }),
    };
    let policy = ToyPolicy::for_task(&task);
    let mut trainer = Trainer::new(training, &task, &policy, scheduler)
        .map_err(|error| ExperimentError::Training { seed, steps_completed: 0, error })?;

    let started = Instant::now();
    let mut records = Vec::with_capacity(config.sfpo.total_steps);
    let mut cumulative = 0u64;
    while !trainer.is_finished() {
        match trainer.step() {
            Ok(trace) => {
                cumulative += trace.rollout_count as u64;
                let ms = config.wall_clock.then(|| started.elapsed().as_secs_f64() * 1e3);
                records.push(MetricsRecord::from_trace(&trace, cumulative, ms));
            }
            Err(error) => return Ok(SeedRun { seed, records, error: Some(error) }),
        }
    }
    Ok(SeedRun { seed, records, error: None })
}

fn prepare_dir(dir: &Path) -> Result<(), ExperimentError> {
    let err = |e: std::io::Error| ExperimentError::Output { path: dir.to_path_buf(), message: e.to_string() };
    fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(err)?;
    fs::remove_file(&probe).map_err(err)
}

/// Runs every seed of `config` in parallel and writes one metrics file per
/// seed plus the configuration echo into `config.output_dir`.
///
/// A failed seed still leaves its partial metrics on disk; the first failure
/// (in seed order) is returned after all seeds finish.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<PathBuf>, ExperimentError> {
    config.validate()?;
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    fs::write(dir.join(CONFIG_ECHO), config.to_text())
        .map_err(|e| ExperimentError::Output { path: dir.clone(), message: e.to_string() })?;

    let outcomes: Vec<Result<PathBuf, ExperimentError>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = run_seed(config, seed)?;
            let path = dir.join(metrics_file_name(seed));
            write_metrics(&path, &run.records)?;
            match run.error {
                None => Ok(path),
                Some(error) => Err(ExperimentError::Training { seed, steps_completed: run.records.len(), error }),
            }
        })
        .collect();
    outcomes.into_iter().collect()
}
