//! Experiment harness for slow-fast policy optimization on toy tasks:
//! configuration files, seeded multi-run experiments, metrics streams,
//! efficiency reports, ablation presets and plot tables.

pub mod ablation;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod verify;

pub use ablation::{digit_sum_collapse, run_preset, stage3_ablation, PairedRuns, Preset};
pub use config::{parse_seed_list, ConfigError, RunConfig, TaskKind};
pub use experiment::{metrics_file_name, run_experiment, run_seed, ExperimentError, SeedRun};
pub use metrics::{read_metrics, write_metrics, MetricsRecord};
pub use report::{efficiency_report, smoothed, EfficiencyReport};
