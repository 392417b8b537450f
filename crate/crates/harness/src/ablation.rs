//! Named experiment presets. Each preset is a list of labelled variants of a
//! base configuration; every variant runs all seeds into `out/<label>/`.

use std::path::{Path, PathBuf};

use sfpo::AlphaStrategy;

use crate::config::{RunConfig, TaskKind};
use crate::experiment::{run_experiment, ExperimentError};

/// Digit sums at a step size large enough to drive the policy toward
/// collapse within a few hundred steps.
pub fn digit_sum_collapse() -> RunConfig {
    let mut c = RunConfig::default();
    c.task.kind = TaskKind::DigitSum;
    c.sfpo.step_size = 10.0;
    c.sfpo.total_steps = 300;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `K` in {3, 7} crossed with `alpha0` in {0.2, 0.5, 0.8, 1.0}.
    AlphaGrid,
    /// `K` in {1, 2, 3, 5, 7} at the base `alpha0`.
    KSweep,
    /// With and without the slow correction.
    Stage3,
    /// Entropy trigger on and off, on the collapse-prone task.
    EntropyControl,
    /// Hard reset against linear decay over 10 and 50 steps.
    AlphaDecay,
    /// Plain one-shot updates against the slow-fast step.
    BaselineVsSfpo,
}

#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub config: RunConfig,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::AlphaGrid,
        Preset::KSweep,
        Preset::Stage3,
        Preset::EntropyControl,
        Preset::AlphaDecay,
        Preset::BaselineVsSfpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AlphaGrid => "alpha_grid",
            Preset::KSweep => "k_sweep",
            Preset::Stage3 => "stage3",
            Preset::EntropyControl => "entropy_control",
            Preset::AlphaDecay => "alpha_decay",
            Preset::BaselineVsSfpo => "baseline_vs_sfpo",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Base configuration used when none is supplied.
    pub fn default_base(self) -> RunConfig {
        match self {
            Preset::EntropyControl | Preset::AlphaDecay => digit_sum_collapse(),
            _ => RunConfig::default(),
        }
    }

    pub fn variants(self, base: &RunConfig) -> Vec<Variant> {
        let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
            let mut config = base.clone();
            f(&mut config);
            Variant { label, config }
        };
        match self {
            Preset::AlphaGrid => [3usize, 7]
                .into_iter()
                .flat_map(|k| {
                    [0.2, 0.5, 0.8, 1.0].into_iter().map(move |a| (k, a))
                })
                .map(|(k, a)| {
                    with(format!("k{k}_alpha{a}"), &|c| {
                        c.sfpo.inner_steps = k;
                        c.sfpo.alpha0 = a;
                    })
                })
                .collect(),
            Preset::KSweep => [1usize, 2, 3, 5, 7]
                .into_iter()
                .map(|k| with(format!("k{k}"), &|c| c.sfpo.inner_steps = k))
                .collect(),
            Preset::Stage3 => stage3_variants(base).to_vec(),
            Preset::EntropyControl => [true, false]
                .into_iter()
                .map(|on| {
                    let label = if on { "ec_on" } else { "ec_off" };
                    with(label.into(), &|c| c.scheduler.entropy_control = on)
                })
                .collect(),
            Preset::AlphaDecay => vec![
                with("hard_reset".into(), &|c| c.scheduler.strategy = AlphaStrategy::HardReset),
                with("linear_decay10".into(), &|c| {
                    c.scheduler.strategy = AlphaStrategy::LinearDecay { decay_steps: 10 }
                }),
                with("linear_decay50".into(), &|c| {
                    c.scheduler.strategy = AlphaStrategy::LinearDecay { decay_steps: 50 }
                }),
            ],
            Preset::BaselineVsSfpo => vec![
                with("baseline".into(), &|c| c.baseline_mode = true),
                with("sfpo".into(), &|c| c.baseline_mode = false),
            ],
        }
    }
}

fn stage3_variants(base: &RunConfig) -> [Variant; 2] {
    let mut on = base.clone();
    on.sfpo.slow_correction = true;
    let mut off = base.clone();
    off.sfpo.slow_correction = false;
    [Variant { label: "stage3_on".into(), config: on }, Variant { label: "stage3_off".into(), config: off }]
}

#[derive(Debug, Clone)]
pub struct VariantOutput {
    pub label: String,
    pub files: Vec<PathBuf>,
}

/// Runs every variant of `preset` under `out`.
pub fn run_preset(preset: Preset, base: &RunConfig, out: &Path) -> Result<Vec<VariantOutput>, ExperimentError> {
    preset
        .variants(base)
        .into_iter()
        .map(|mut v| {
            v.config.output_dir = out.join(&v.label);
            let files = run_experiment(&v.config)?;
            Ok(VariantOutput { label: v.label, files })
        })
        .collect()
}

/// Seed-paired runs with and without the slow correction.
#[derive(Debug, Clone)]
pub struct PairedRuns {
    pub with_correction: Vec<PathBuf>,
    pub without_correction: Vec<PathBuf>,
}

/// Runs `config` twice under shared seeds, into `stage3_on/` and
/// `stage3_off/` below its output directory.
pub fn stage3_ablation(config: &RunConfig) -> Result<PairedRuns, ExperimentError> {
    let mut outputs = run_preset(Preset::Stage3, config, &config.output_dir)?.into_iter();
    let on = outputs.next().expect("two variants");
    let off = outputs.next().expect("two variants");
    Ok(PairedRuns { with_correction: on.files, without_correction: off.files })
}
