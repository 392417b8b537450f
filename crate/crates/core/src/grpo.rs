//! Group-relative clipped surrogate objective.
//!
//! Rewards are normalised within each group of `G` responses to the same
//! prompt, the per-response advantage is broadcast to every token, and the
//! token-level importance ratio against the frozen sampling policy is clipped
//! to `[1 - eps, 1 + eps]`. The returned loss is the negated objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, SfpoError};
use crate::params::ParameterVector;
use crate::policy::{entropy_of, ToyPolicy};
use crate::sfpo::GradientOracle;
use crate::task::{Prompt, SyntheticTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub tokens: Vec<u32>,
    /// Log-probabilities under the sampling policy, frozen at generation time.
    pub old_logprobs: Vec<f64>,
    /// Reference-policy log-probabilities; only needed when the KL term is on.
    pub ref_logprobs: Option<Vec<f64>>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptGroup {
    pub prompt: Prompt,
    pub responses: Vec<Response>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub groups: Vec<PromptGroup>,
}

impl RolloutBatch {
    pub fn new(groups: Vec<PromptGroup>) -> Result<Self> {
        let batch = Self { groups };
        batch.validate()?;
        Ok(batch)
    }

    /// Checks the shape invariants: equal group sizes of at least two,
    /// non-positive old log-probabilities, finite rewards.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.groups.first() else {
            return Err(SfpoError::Data("rollout batch has no prompts".into()));
        };
        let g = first.responses.len();
        if g < 2 {
            return Err(config_err(format!("group size must be at least 2, got {g}")));
        }
        for (gi, group) in self.groups.iter().enumerate() {
            if group.responses.len() != g {
                return Err(SfpoError::Data(format!(
                    "group {gi} has {} responses, expected {g}",
                    group.responses.len()
                )));
            }
            for r in &group.responses {
                if r.tokens.is_empty() || r.old_logprobs.len() != r.tokens.len() {
                    return Err(SfpoError::Data(format!("group {gi}: malformed response")));
                }
                if r.old_logprobs.iter().any(|&lp| !(lp <= 0.0)) {
                    return Err(SfpoError::Data(format!("group {gi}: old log-probability above zero")));
                }
                if let Some(refs) = &r.ref_logprobs {
                    if refs.len() != r.tokens.len() {
                        return Err(SfpoError::Data(format!("group {gi}: reference length mismatch")));
                    }
                }
                if !r.reward.is_finite() {
                    return Err(SfpoError::Data(format!("group {gi}: non-finite reward")));
                }
            }
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.groups.first().map_or(0, |g| g.responses.len())
    }

    pub fn rollout_count(&self) -> usize {
        self.groups.iter().map(|g| g.responses.len()).sum()
    }

    fn responses(&self) -> impl Iterator<Item = (&Prompt, &Response)> {
        self.groups
            .iter()
            .flat_map(|g| g.responses.iter().map(move |r| (&g.prompt, r)))
    }

    pub fn mean_reward(&self) -> f64 {
        self.responses().map(|(_, r)| r.reward).sum::<f64>() / self.rollout_count() as f64
    }

    /// Mean sampled tokens per response, end-of-sequence included.
    pub fn mean_response_length(&self) -> f64 {
        self.responses().map(|(_, r)| r.tokens.len() as f64).sum::<f64>() / self.rollout_count() as f64
    }

    pub fn rewards_by_group(&self) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| g.responses.iter().map(|r| r.reward).collect())
            .collect()
    }

    /// Splits the prompts into `parts` contiguous mini-batches.
    pub fn split(&self, parts: usize) -> Result<Vec<RolloutBatch>> {
        if parts == 0 || parts > self.groups.len() {
            return Err(config_err(format!(
                "cannot split {} prompts into {parts} mini-batches",
                self.groups.len()
            )));
        }
        let n = self.groups.len();
        Ok((0..parts)
            .map(|i| RolloutBatch {
                groups: self.groups[i * n / parts..(i + 1) * n / parts].to_vec(),
            })
            .collect())
    }

    /// Fills reference log-probabilities from a fixed reference parameter vector.
    pub fn attach_reference(&mut self, policy: &ToyPolicy, reference: &ParameterVector) -> Result<()> {
        for group in &mut self.groups {
            for r in &mut group.responses {
                let positions = policy.positions(reference, &group.prompt, &r.tokens)?;
                r.ref_logprobs = Some(positions.iter().map(|p| p.log_probs[p.token as usize]).collect());
            }
        }
        Ok(())
    }
}

/// Per-group, per-response normalised advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet {
    pub values: Vec<Vec<f64>>,
}

/// `(r - mean) / max(std, eps_num)` per group with the population standard
/// deviation. Groups whose rewards are all equal get zero advantages.
pub fn normalize_advantages(rewards: &[Vec<f64>], eps_num: f64) -> Result<AdvantageSet> {
    let values = rewards
        .iter()
        .map(|group| {
            if group.len() < 2 {
                return Err(config_err(format!("group size must be at least 2, got {}", group.len())));
            }
            let first = group[0];
            if group.iter().all(|&r| r == first) {
                return Ok(vec![0.0; group.len()]);
            }
            let n = group.len() as f64;
            let mean = group.iter().sum::<f64>() / n;
            let var = group.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let denom = var.sqrt().max(eps_num);
            Ok(group.iter().map(|r| (r - mean) / denom).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdvantageSet { values })
}

/// Hyperparameters of the clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoObjective {
    pub clip_range: f64,
    pub kl_coeff: f64,
    pub eps_num: f64,
}

impl Default for GrpoObjective {
    fn default() -> Self {
        Self { clip_range: 0.2, kl_coeff: 0.0, eps_num: 1e-8 }
    }
}

/// Clipped surrogate `min(r A, clip(r) A)` and whether the unclipped branch is
/// the one selected.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_range: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

impl GrpoObjective {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_range > 0.0) {
            return Err(config_err("clip range must be positive"));
        }
        if !(self.kl_coeff >= 0.0) {
            return Err(config_err("kl coefficient must be non-negative"));
        }
        if !(self.eps_num > 0.0) {
            return Err(config_err("eps_num must be positive"));
        }
        Ok(())
    }

    fn prepare(&self, batch: &RolloutBatch) -> Result<AdvantageSet> {
        self.validate()?;
        batch.validate()?;
        if self.kl_coeff > 0.0
            && batch.responses().any(|(_, r)| r.ref_logprobs.is_none())
        {
            return Err(config_err("kl coefficient > 0 requires reference log-probabilities"));
        }
        normalize_advantages(&batch.rewards_by_group(), self.eps_num)
    }

    /// Walks every token, handing `(position, weight, d term / d logpi)` to
    /// `visit`, and returns the objective `J`.
    fn walk(
        &self,
        policy: &ToyPolicy,
        theta: &ParameterVector,
        batch: &RolloutBatch,
        mut visit: impl FnMut(&crate::policy::Position, f64),
    ) -> Result<f64> {
        let advantages = self.prepare(batch)?;
        let prompts = batch.groups.len() as f64;
        let mut objective = 0.0;
        for (group, advs) in batch.groups.iter().zip(&advantages.values) {
            let g = group.responses.len() as f64;
            for (resp, &adv) in group.responses.iter().zip(advs) {
                let positions = policy.positions(theta, &group.prompt, &resp.tokens)?;
                let weight = 1.0 / (prompts * g * resp.tokens.len() as f64);
                let mut response_sum = 0.0;
                for (t, pos) in positions.iter().enumerate() {
                    let lp = pos.log_probs[pos.token as usize];
                    let ratio = (lp - resp.old_logprobs[t]).exp();
                    let (surrogate, unclipped) = clipped_surrogate(ratio, adv, self.clip_range);
                    let mut term = surrogate;
                    let mut dterm = if unclipped { ratio * adv } else { 0.0 };
                    if self.kl_coeff > 0.0 {
                        let refs = resp.ref_logprobs.as_ref().expect("checked in prepare");
                        let delta = refs[t] - lp;
                        term -= self.kl_coeff * (delta.exp() - delta - 1.0);
                        dterm -= self.kl_coeff * (1.0 - delta.exp());
                    }
                    response_sum += term;
                    visit(pos, weight * dterm);
                }
                objective += weight * response_sum;
            }
        }
        Ok(objective)
    }

    /// Loss `-J` of the batch at `theta`.
    pub fn loss(&self, policy: &ToyPolicy, theta: &ParameterVector, batch: &RolloutBatch) -> Result<f64> {
        Ok(-self.walk(policy, theta, batch, |_, _| {})?)
    }

    /// Exact gradient of [`GrpoObjective::loss`].
    pub fn grad(
        &self,
        policy: &ToyPolicy,
        theta: &ParameterVector,
        batch: &RolloutBatch,
    ) -> Result<ParameterVector> {
        let mut grad = vec![0.0; policy.param_dim()];
        self.walk(policy, theta, batch, |pos, d_objective| {
            policy.add_score(pos, -d_objective, &mut grad);
        })?;
        Ok(ParameterVector::new(grad))
    }
}

/// Mean full-distribution entropy (nats) over every generated token position.
pub fn policy_entropy(policy: &ToyPolicy, theta: &ParameterVector, batch: &RolloutBatch) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (prompt, resp) in batch.responses() {
        for pos in policy.positions(theta, prompt, &resp.tokens)? {
            total += entropy_of(&pos.log_probs);
            count += 1;
        }
    }
    if count == 0 {
        return Err(SfpoError::Data("entropy of an empty batch".into()));
    }
    Ok(total / count as f64)
}

/// The clipped objective bound to one policy class.
#[derive(Debug, Clone, Copy)]
pub struct GrpoOracle<'p> {
    pub policy: &'p ToyPolicy,
    pub objective: GrpoObjective,
}

impl GradientOracle<RolloutBatch> for GrpoOracle<'_> {
    fn loss(&self, theta: &ParameterVector, batch: &RolloutBatch) -> Result<f64> {
        self.objective.loss(self.policy, theta, batch)
    }
    fn grad(&self, theta: &ParameterVector, batch: &RolloutBatch) -> Result<ParameterVector> {
        self.objective.grad(self.policy, theta, batch)
    }
}

/// Sampling knobs for rollout generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { temperature: 1.0, top_p: 0.7 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(config_err("temperature must be positive"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(config_err("top_p must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Draws `batch_size` prompts and `group_size` responses for each.
pub fn sample_rollouts_with<R: Rng + ?Sized>(
    policy: &ToyPolicy,
    theta: &ParameterVector,
    task: &SyntheticTask,
    batch_size: usize,
    group_size: usize,
    sampling: SamplingConfig,
    rng: &mut R,
) -> Result<RolloutBatch> {
    sampling.validate()?;
    theta.check_dim(policy.param_dim())?;
    if batch_size == 0 {
        return Err(config_err("batch size must be positive"));
    }
    if group_size < 2 {
        return Err(config_err(format!("group size must be at least 2, got {group_size}")));
    }
    let prompts = task.sample_prompts(batch_size, rng);
    for p in &prompts {
        policy.check_prompt(p)?;
    }
    let groups = prompts
        .into_iter()
        .map(|prompt| {
            let responses = (0..group_size)
                .map(|_| {
                    let (tokens, old_logprobs) =
                        policy.sample_response(theta, &prompt, sampling.temperature, sampling.top_p, rng);
                    let reward = task.reward(&prompt, &tokens);
                    Response { tokens, old_logprobs, ref_logprobs: None, reward }
                })
                .collect();
            PromptGroup { prompt, responses }
        })
        .collect();
    RolloutBatch::new(groups)
}

/// [`sample_rollouts_with`] driven by a fresh generator seeded from `seed`.
pub fn sample_rollouts(
    policy: &ToyPolicy,
    theta: &ParameterVector,
    task: &SyntheticTask,
    batch_size: usize,
    group_size: usize,
    sampling: SamplingConfig,
    seed: u64,
) -> Result<RolloutBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_rollouts_with(policy, theta, task, batch_size, group_size, sampling, &mut rng)
}
