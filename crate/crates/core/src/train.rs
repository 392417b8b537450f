//! The outer training loop: sample rollouts at the current slow weights, pick
//! the step's interpolation factor, run one slow-fast step on the batch, then
//! feed the step's entropy to the scheduler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, SfpoError};
use crate::grpo::{policy_entropy, sample_rollouts_with, GrpoObjective, GrpoOracle, RolloutBatch, SamplingConfig};
use crate::optim::{OptimizerKind, OptimizerRule};
use crate::params::ParameterVector;
use crate::policy::ToyPolicy;
use crate::scheduler::AlphaScheduler;
use crate::sfpo::{sfpo_step_with, GradientOracle, StageOptions, StepUpdate};
use crate::task::SyntheticTask;

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfpoConfig {
    pub total_steps: usize,
    pub inner_steps: usize,
    pub alpha0: f64,
    pub step_size: f64,
    pub window: usize,
    pub threshold: f64,
    pub eps_num: f64,
    pub clip_range: f64,
    pub kl_coeff: f64,
    pub group_size: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
    pub sampling: SamplingConfig,
    /// Number of mini-batches the rollout batch is cut into; optimizer step
    /// `i` of a slow-fast step uses mini-batch `i mod minibatches`.
    pub minibatches: usize,
    pub slow_correction: bool,
}

impl Default for SfpoConfig {
    /// Large-scale reference settings: AdamW at 1e-6, clip 1.0, 8 responses per
    /// prompt, temperature 1.0 with top-p 0.7, no KL term.
    fn default() -> Self {
        Self {
            total_steps: 500,
            inner_steps: 3,
            alpha0: 0.8,
            step_size: 1e-6,
            window: 20,
            threshold: 3.0,
            eps_num: 1e-8,
            clip_range: 0.2,
            kl_coeff: 0.0,
            group_size: 8,
            batch_size: 256,
            seed: 0,
            optimizer: OptimizerKind::adamw(),
            grad_clip: Some(1.0),
            sampling: SamplingConfig::default(),
            minibatches: 1,
            slow_correction: true,
        }
    }
}

impl SfpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(config_err("total_steps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha0) {
            return Err(config_err(format!("alpha0 must lie in [0, 1], got {}", self.alpha0)));
        }
        if self.window == 0 {
            return Err(config_err("window must be positive"));
        }
        if !(self.threshold > 0.0) {
            return Err(config_err("threshold must be positive"));
        }
        if self.group_size < 2 {
            return Err(config_err("group_size must be at least 2"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size must be positive"));
        }
        if self.minibatches == 0 || self.minibatches > self.batch_size {
            return Err(config_err("minibatches must lie in 1..=batch_size"));
        }
        self.objective().validate()?;
        self.sampling.validate()?;
        self.optimizer_rule()?;
        Ok(())
    }

    pub fn objective(&self) -> GrpoObjective {
        GrpoObjective { clip_range: self.clip_range, kl_coeff: self.kl_coeff, eps_num: self.eps_num }
    }

    pub fn optimizer_rule(&self) -> Result<OptimizerRule> {
        OptimizerRule::new(self.optimizer, self.step_size, self.grad_clip)
    }

    pub fn rollouts_per_step(&self) -> usize {
        self.batch_size * self.group_size
    }
}

/// Full record of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step_index: usize,
    pub update: StepUpdate,
    pub alpha_used: f64,
    /// Mean per-token policy entropy at the step's starting weights (nats).
    pub entropy: f64,
    pub zscore: Option<f64>,
    pub mean_reward: f64,
    pub mean_response_length: f64,
    pub rollout_count: usize,
    /// Loss of the step's batch at the new slow weights.
    pub loss_after: f64,
    /// Set only on the step whose entropy fired the trigger.
    pub stop_step: Option<usize>,
}

/// Stateful driver for one run.
pub struct Trainer<'a> {
    config: SfpoConfig,
    task: &'a SyntheticTask,
    policy: &'a ToyPolicy,
    scheduler: AlphaScheduler,
    rule: OptimizerRule,
    theta: ParameterVector,
    reference: Option<ParameterVector>,
    rng: ChaCha8Rng,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: SfpoConfig,
        task: &'a SyntheticTask,
        policy: &'a ToyPolicy,
        scheduler: AlphaScheduler,
    ) -> Result<Self> {
        config.validate()?;
        let theta = ParameterVector::zeros(policy.param_dim());
        let reference = (config.kl_coeff > 0.0).then(|| theta.clone());
        Ok(Self {
            rule: config.optimizer_rule()?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            task,
            policy,
            scheduler,
            theta,
            reference,
            step: 0,
        })
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn scheduler(&self) -> &AlphaScheduler {
        &self.scheduler
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.total_steps
    }

    fn sample(&mut self) -> Result<RolloutBatch> {
        self.rng.set_stream(self.step as u64);
        self.rng.set_word_pos(0);
        let mut batch = sample_rollouts_with(
            self.policy,
            &self.theta,
            self.task,
            self.config.batch_size,
            self.config.group_size,
            self.config.sampling,
            &mut self.rng,
        )?;
        if let Some(reference) = &self.reference {
            batch.attach_reference(self.policy, reference)?;
        }
        Ok(batch)
    }

    pub fn step(&mut self) -> Result<StepTrace> {
        let s = self.step;
        let batch = self.sample()?;
        let alpha = self.scheduler.alpha_for_step(s);
        let entropy = policy_entropy(self.policy, &self.theta, &batch)?;

        let oracle = GrpoOracle { policy: self.policy, objective: self.config.objective() };
        let minis = if self.config.minibatches > 1 {
            batch.split(self.config.minibatches)?
        } else {
            Vec::new()
        };
        let batch_for = |i: usize| -> &RolloutBatch {
            if minis.is_empty() {
                &batch
            } else {
                &minis[i % minis.len()]
            }
        };
        let options = StageOptions { slow_correction: self.config.slow_correction };
        let update = sfpo_step_with(
            &self.theta,
            &batch_for,
            &oracle,
            &mut self.rule,
            alpha,
            self.config.inner_steps,
            options,
        )?;

        let before = self.scheduler.trigger_step();
        let zscore = self.scheduler.observe_entropy(entropy, s);
        let stop_step = match (before, self.scheduler.trigger_step()) {
            (None, Some(star)) => Some(star),
            _ => None,
        };
        let loss_after = oracle.loss(&update.next_slow, &batch)?;

        self.theta = update.next_slow.clone();
        self.step += 1;
        Ok(StepTrace {
            step_index: s,
            alpha_used: alpha,
            entropy,
            zscore,
            mean_reward: batch.mean_reward(),
            mean_response_length: batch.mean_response_length(),
            rollout_count: batch.rollout_count(),
            loss_after,
            stop_step,
            update,
        })
    }
}

/// A run that stopped early, with the steps completed before the failure.
#[derive(Debug, Clone)]
pub struct TrainingAbort {
    pub traces: Vec<StepTrace>,
    pub error: SfpoError,
}

impl std::fmt::Display for TrainingAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training aborted after {} steps: {}", self.traces.len(), self.error)
    }
}

impl std::error::Error for TrainingAbort {}

/// Runs `config.total_steps` steps from zero-initialised parameters.
pub fn run_training(
    config: &SfpoConfig,
    task: &SyntheticTask,
    policy: &ToyPolicy,
    scheduler: AlphaScheduler,
) -> std::result::Result<Vec<StepTrace>, TrainingAbort> {
    let mut trainer = Trainer::new(config.clone(), task, policy, scheduler)
        .map_err(|error| TrainingAbort { traces: Vec::new(), error })?;
    let mut traces = Vec::with_capacity(config.total_steps);
    while !trainer.is_finished() {
        match trainer.step() {
            Ok(t) => traces.push(t),
            Err(error) => return Err(TrainingAbort { traces, error }),
        }
    }
    Ok(traces)
}
