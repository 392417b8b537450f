//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and falls
//! back to the toy defaults of [`RunConfig::default`]; unknown or repeated keys
//! are errors. [`RunConfig::to_text`] writes the fully resolved configuration
//! back in the same format, so an echoed file parses to an identical config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sfpo::{
    AlphaScheduler, AlphaStrategy, OptimizerKind, SamplingConfig, SfpoConfig, TaskKnobs, TriggerSide,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    GroupBandit,
    DigitSum,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::GroupBandit => "group_bandit",
            TaskKind::DigitSum => "digit_sum",
        }
    }

    /// The policy class that can represent this task's responses.
    pub fn policy_name(self) -> &'static str {
        match self {
            TaskKind::GroupBandit => "softmax_bandit",
            TaskKind::DigitSum => "linear_seq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub knobs: TaskKnobs,
    /// Seed for the task's hidden answers; `None` reuses each run's seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub strategy: AlphaStrategy,
    pub side: TriggerSide,
    pub entropy_control: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sfpo: SfpoConfig,
    pub task: TaskConfig,
    pub scheduler: SchedulerConfig,
    /// Forces `alpha0 = 0`, i.e. plain one-shot updates.
    pub baseline_mode: bool,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Trailing window (steps) for reward smoothing in reports.
    pub smoothing_window: usize,
    /// Adds per-step wall-clock time to the metrics; makes files non-reproducible.
    pub wall_clock: bool,
}

impl Default for RunConfig {
    /// Toy bandit settings: 4 contexts, 16 arms, 32 prompts with 8 responses
    /// each, plain SGD at step size 1 and untruncated sampling.
    fn default() -> Self {
        Self {
            sfpo: SfpoConfig {
                total_steps: 500,
                inner_steps: 3,
                alpha0: 0.8,
                step_size: 1.0,
                batch_size: 32,
                group_size: 8,
                optimizer: OptimizerKind::PlainSgd,
                grad_clip: None,
                sampling: SamplingConfig { temperature: 1.0, top_p: 1.0 },
                ..SfpoConfig::default()
            },
            task: TaskConfig { kind: TaskKind::GroupBandit, knobs: TaskKnobs::default(), seed: None },
            scheduler: SchedulerConfig {
                strategy: AlphaStrategy::HardReset,
                side: TriggerSide::TwoSided,
                entropy_control: true,
            },
            baseline_mode: false,
            output_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            smoothing_window: 5,
            wall_clock: false,
        }
    }
}

const KEYS: &[&str] = &[
    "total_steps",
    "inner_steps",
    "alpha0",
    "step_size",
    "window",
    "threshold",
    "eps_num",
    "clip_range",
    "kl_coeff",
    "group_size",
    "batch_size",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "weight_decay",
    "grad_clip",
    "temperature",
    "top_p",
    "minibatches",
    "slow_correction",
    "task",
    "contexts",
    "arms",
    "max_digit",
    "task_seed",
    "policy",
    "strategy",
    "decay_steps",
    "trigger_side",
    "entropy_control",
    "baseline",
    "output_dir",
    "seeds",
    "smoothing_window",
    "wall_clock",
];

fn parse_num<T: FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| field(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &'static str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(field(key, format!("expected true or false, got {value:?}"))),
    }
}

fn key_name(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(&'static str, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let k = k.trim();
            let key = key_name(k).ok_or_else(|| ConfigError::UnknownKey { line: i + 1, key: k.to_string() })?;
            if pairs.iter().any(|(seen, _)| *seen == key) {
                return Err(ConfigError::Duplicate { line: i + 1, key: k.to_string() });
            }
            pairs.push((key, v.trim().to_string()));
        }
        let mut config = Self::default();
        config.apply(&pairs)?;
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, pairs: &[(&'static str, String)]) -> Result<(), ConfigError> {
        let get = |key: &str| pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str());
        let s = &mut self.sfpo;

        // optimizer first so the moment knobs below can refine it
        if let Some(v) = get("optimizer") {
            s.optimizer = match v {
                "sgd" => OptimizerKind::PlainSgd,
                "adamw" => OptimizerKind::adamw(),
                _ => return Err(field("optimizer", format!("expected sgd or adamw, got {v:?}"))),
            };
        }
        for key in ["adam_beta1", "adam_beta2", "adam_eps", "weight_decay"] {
            let Some(v) = get(key) else { continue };
            let key = key_name(key).expect("listed key");
            let x: f64 = parse_num(key, v)?;
            match &mut s.optimizer {
                OptimizerKind::PlainSgd => return Err(field(key, "only applies to optimizer = adamw")),
                OptimizerKind::AdaptiveMoment { beta1, beta2, eps, weight_decay } => match key {
                    "adam_beta1" => *beta1 = x,
                    "adam_beta2" => *beta2 = x,
                    "adam_eps" => *eps = x,
                    _ => *weight_decay = x,
                },
            }
        }

        for &(key, ref v) in pairs {
            match key {
                "total_steps" => s.total_steps = parse_num(key, v)?,
                "inner_steps" => s.inner_steps = parse_num(key, v)?,
                "alpha0" => s.alpha0 = parse_num(key, v)?,
                "step_size" => s.step_size = parse_num(key, v)?,
                "window" => s.window = parse_num(key, v)?,
                "threshold" => s.threshold = parse_num(key, v)?,
                "eps_num" => s.eps_num = parse_num(key, v)?,
                "clip_range" => s.clip_range = parse_num(key, v)?,
                "kl_coeff" => s.kl_coeff = parse_num(key, v)?,
                "group_size" => s.group_size = parse_num(key, v)?,
                "batch_size" => s.batch_size = parse_num(key, v)?,
                "grad_clip" => s.grad_clip = if v == "none" { None } else { Some(parse_num(key, v)?) },
                "temperature" => s.sampling.temperature = parse_num(key, v)?,
                "top_p" => s.sampling.top_p = parse_num(key, v)?,
                "minibatches" => s.minibatches = parse_num(key, v)?,
                "slow_correction" => s.slow_correction = parse_bool(key, v)?,
                "task" => {
                    self.task.kind = match v.as_str() {
                        "group_bandit" => TaskKind::GroupBandit,
                        "digit_sum" => TaskKind::DigitSum,
                        _ => return Err(field(key, format!("expected group_bandit or digit_sum, got {v:?}"))),
                    }
                }
                "contexts" => self.task.knobs.contexts = parse_num(key, v)?,
                "arms" => self.task.knobs.arms = parse_num(key, v)?,
                "max_digit" => self.task.knobs.max_digit = parse_num(key, v)?,
                "task_seed" => self.task.seed = Some(parse_num(key, v)?),
                "strategy" => {
                    self.scheduler.strategy = match v.as_str() {
                        "hard_reset" => AlphaStrategy::HardReset,
                        "linear_decay" => AlphaStrategy::LinearDecay { decay_steps: 50 },
                        _ => return Err(field(key, format!("expected hard_reset or linear_decay, got {v:?}"))),
                    }
                }
                "trigger_side" => {
                    self.scheduler.side = match v.as_str() {
                        "two_sided" => TriggerSide::TwoSided,
                        "below" => TriggerSide::Below,
                        "above" => TriggerSide::Above,
                        _ => return Err(field(key, format!("expected two_sided, below or above, got {v:?}"))),
                    }
                }
                "entropy_control" => self.scheduler.entropy_control = parse_bool(key, v)?,
                "baseline" => self.baseline_mode = parse_bool(key, v)?,
                "output_dir" => self.output_dir = PathBuf::from(v),
                "seeds" => self.seeds = parse_seed_list(v).map_err(|m| field(key, m))?,
                "smoothing_window" => self.smoothing_window = parse_num(key, v)?,
                "wall_clock" => self.wall_clock = parse_bool(key, v)?,
                _ => {}
            }
        }

        if let Some(v) = get("decay_steps") {
            let n = parse_num("decay_steps", v)?;
            match &mut self.scheduler.strategy {
                AlphaStrategy::LinearDecay { decay_steps } => *decay_steps = n,
                AlphaStrategy::HardReset => return Err(field("decay_steps", "only applies to strategy = linear_decay")),
            }
        }
        if let Some(v) = get("policy") {
            let expected = self.task.kind.policy_name();
            if v != expected {
                return Err(field(
                    "policy",
                    format!("task {} needs policy {expected}, got {v:?}", self.task.kind.name()),
                ));
            }
        }
        Ok(())
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sfpo;
        if s.total_steps == 0 {
            return Err(field("total_steps", "must be positive"));
        }
        if !(0.0..=1.0).contains(&s.alpha0) {
            return Err(field("alpha0", format!("must lie in [0, 1], got {}", s.alpha0)));
        }
        if !(s.step_size > 0.0 && s.step_size.is_finite()) {
            return Err(field("step_size", format!("must be positive, got {}", s.step_size)));
        }
        if s.window == 0 {
            return Err(field("window", "must be positive"));
        }
        if !(s.threshold > 0.0) {
            return Err(field("threshold", format!("must be positive, got {}", s.threshold)));
        }
        if !(s.eps_num > 0.0) {
            return Err(field("eps_num", format!("must be positive, got {}", s.eps_num)));
        }
        if !(s.clip_range > 0.0) {
            return Err(field("clip_range", format!("must be positive, got {}", s.clip_range)));
        }
        if !(s.kl_coeff >= 0.0) {
            return Err(field("kl_coeff", format!("must be non-negative, got {}", s.kl_coeff)));
        }
        if s.group_size < 2 {
            return Err(field("group_size", format!("must be at least 2, got {}", s.group_size)));
        }
        if s.batch_size == 0 {
            return Err(field("batch_size", "must be positive"));
        }
        if let Some(c) = s.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(field("grad_clip", format!("must be positive or none, got {c}")));
            }
        }
        if let OptimizerKind::AdaptiveMoment { beta1, beta2, eps, weight_decay } = s.optimizer {
            if !(0.0..1.0).contains(&beta1) {
                return Err(field("adam_beta1", format!("must lie in [0, 1), got {beta1}")));
            }
            if !(0.0..1.0).contains(&beta2) {
                return Err(field("adam_beta2", format!("must lie in [0, 1), got {beta2}")));
            }
            if !(eps > 0.0) {
                return Err(field("adam_eps", format!("must be positive, got {eps}")));
            }
            if !(weight_decay >= 0.0) {
                return Err(field("weight_decay", format!("must be non-negative, got {weight_decay}")));
            }
        }
        if !(s.sampling.temperature > 0.0 && s.sampling.temperature.is_finite()) {
            return Err(field("temperature", format!("must be positive, got {}", s.sampling.temperature)));
        }
        if !(s.sampling.top_p > 0.0 && s.sampling.top_p <= 1.0) {
            return Err(field("top_p", format!("must lie in (0, 1], got {}", s.sampling.top_p)));
        }
        if s.minibatches == 0 || s.minibatches > s.batch_size {
            return Err(field("minibatches", format!("must lie in 1..={}, got {}", s.batch_size, s.minibatches)));
        }
        match self.task.kind {
            TaskKind::GroupBandit => {
                if self.task.knobs.contexts == 0 {
                    return Err(field("contexts", "must be positive"));
                }
                if self.task.knobs.arms < 2 {
                    return Err(field("arms", format!("must be at least 2, got {}", self.task.knobs.arms)));
                }
            }
            TaskKind::DigitSum => {
                if self.task.knobs.max_digit > 9 {
                    return Err(field("max_digit", format!("must be at most 9, got {}", self.task.knobs.max_digit)));
                }
            }
        }
        if let AlphaStrategy::LinearDecay { decay_steps: 0 } = self.scheduler.strategy {
            return Err(field("decay_steps", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(field("seeds", "need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(field("seeds", "seeds must be distinct"));
        }
        if self.smoothing_window == 0 {
            return Err(field("smoothing_window", "must be positive"));
        }
        Ok(())
    }

    /// The per-run training config, with baseline mode folded in.
    pub fn training_config(&self, seed: u64) -> SfpoConfig {
        let mut c = self.sfpo.clone();
        c.seed = seed;
        if self.baseline_mode {
            c.alpha0 = 0.0;
        }
        c
    }

    pub fn scheduler_for(&self, config: &SfpoConfig) -> sfpo::Result<AlphaScheduler> {
        Ok(AlphaScheduler::new(config.alpha0, config.window, config.threshold, config.eps_num, self.scheduler.strategy)?
            .with_side(self.scheduler.side)
            .with_entropy_control(self.scheduler.entropy_control))
    }

    /// The resolved configuration in `key = value` form.
    pub fn to_text(&self) -> String {
        let s = &self.sfpo;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("total_steps", s.total_steps.to_string());
        put("inner_steps", s.inner_steps.to_string());
        put("alpha0", s.alpha0.to_string());
        put("step_size", s.step_size.to_string());
        put("window", s.window.to_string());
        put("threshold", s.threshold.to_string());
        put("eps_num", s.eps_num.to_string());
        put("clip_range", s.clip_range.to_string());
        put("kl_coeff", s.kl_coeff.to_string());
        put("group_size", s.group_size.to_string());
        put("batch_size", s.batch_size.to_string());
        match s.optimizer {
            OptimizerKind::PlainSgd => put("optimizer", "sgd".into()),
            OptimizerKind::AdaptiveMoment { beta1, beta2, eps, weight_decay } => {
                put("optimizer", "adamw".into());
                put("adam_beta1", beta1.to_string());
                put("adam_beta2", beta2.to_string());
                put("adam_eps", eps.to_string());
                put("weight_decay", weight_decay.to_string());
            }
        }
        put("grad_clip", s.grad_clip.map_or("none".into(), |c| c.to_string()));
        put("temperature", s.sampling.temperature.to_string());
        put("top_p", s.sampling.top_p.to_string());
        put("minibatches", s.minibatches.to_string());
        put("slow_correction", s.slow_correction.to_string());
        put("task", self.task.kind.name().into());
        put("policy", self.task.kind.policy_name().into());
        match self.task.kind {
            TaskKind::GroupBandit => {
                put("contexts", self.task.knobs.contexts.to_string());
                put("arms", self.task.knobs.arms.to_string());
            }
            TaskKind::DigitSum => put("max_digit", self.task.knobs.max_digit.to_string()),
        }
        if let Some(seed) = self.task.seed {
            put("task_seed", seed.to_string());
        }
        match self.scheduler.strategy {
            AlphaStrategy::HardReset => put("strategy", "hard_reset".into()),
            AlphaStrategy::LinearDecay { decay_steps } => {
                put("strategy", "linear_decay".into());
                put("decay_steps", decay_steps.to_string());
            }
        }
        let side = match self.scheduler.side {
            TriggerSide::TwoSided => "two_sided",
            TriggerSide::Below => "below",
            TriggerSide::Above => "above",
        };
        put("trigger_side", side.into());
        put("entropy_control", self.scheduler.entropy_control.to_string());
        put("baseline", self.baseline_mode.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        put("smoothing_window", self.smoothing_window.to_string());
        put("wall_clock", self.wall_clock.to_string());
        out
    }
}

/// Parses `0,1,2` or a range `0..5` (end exclusive).
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
        if a >= b {
            return Err(format!("empty seed range {text:?}"));
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|_| format!("bad seed {t:?}")))
        .collect()
}
