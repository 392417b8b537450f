//! Slow-fast policy optimization.
//!
//! Each training step reuses one batch of rollouts for a short run of inner
//! gradient steps, interpolates the endpoint back toward the step's starting
//! weights, and finishes with one correction step at the interpolated point.
//! The objective is the group-relative clipped surrogate; toy policies with
//! exact score functions and verifiable-reward tasks make every piece
//! checkable at desk scale.

pub mod error;
pub mod gradcheck;
pub mod grpo;
pub mod optim;
pub mod params;
pub mod policy;
pub mod quad;
pub mod scheduler;
pub mod sfpo;
pub mod task;
pub mod train;

pub use error::{Result, SfpoError, Stage};
pub use grpo::{
    normalize_advantages, policy_entropy, sample_rollouts, AdvantageSet, GrpoObjective, GrpoOracle, PromptGroup,
    Response, RolloutBatch, SamplingConfig,
};
pub use optim::{OptimizerKind, OptimizerRule};
pub use params::ParameterVector;
pub use policy::{PolicyKind, ToyPolicy};
pub use scheduler::{AlphaScheduler, AlphaStrategy, EntropyBuffer, TriggerSide};
pub use sfpo::{
    fast_trajectory, reposition, sfpo_step, sfpo_step_with, slow_correction, unified_update, FnOracle,
    GradientOracle, StageOptions, StepUpdate,
};
pub use task::{make_task, Prompt, SyntheticTask, TaskKnobs, TaskSpec};
pub use train::{run_training, SfpoConfig, StepTrace, Trainer, TrainingAbort};
