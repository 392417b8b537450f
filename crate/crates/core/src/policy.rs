//! Log-linear toy policies with exact score functions.
//!
//! Both policy classes share one parameterisation: at every position the logit
//! of token `a` is `sum_j theta[a * F + j] * phi_j(prompt, prefix)`, where
//! `phi` is a sparse deterministic feature vector of width `F`. The score of a
//! sampled token `o` is therefore `phi_j * (1[a = o] - p_a)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, SfpoError};
use crate::params::ParameterVector;
use crate::task::{Prompt, SyntheticTask, TaskSpec, DIGIT_MAX_LEN, DIGIT_VOCAB, EOS_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    SoftmaxBandit,
    LinearSeq,
}

#[derive(Debug, Clone, PartialEq)]
enum FeatureMap {
    /// One-hot of the prompt's context id.
    Context { contexts: usize },
    /// Bias, one-hot of (position, a, b), one-hot of the previous token
    /// (with a begin slot), and the scaled sum `(a + b) / 18`.
    DigitPair { digits: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    kind: PolicyKind,
    vocab_size: usize,
    max_len: usize,
    eos: Option<u32>,
    features: FeatureMap,
    feature_dim: usize,
}

/// Distribution of the next token at one position of a response.
#[derive(Debug, Clone)]
pub(crate) struct Position {
    pub features: Vec<(usize, f64)>,
    pub log_probs: Vec<f64>,
    pub token: u32,
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Shannon entropy in nats of the distribution with these log-probabilities.
pub(crate) fn entropy_of(log_probs: &[f64]) -> f64 {
    log_probs
        .iter()
        .map(|&lp| {
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum()
}

impl ToyPolicy {
    pub fn softmax_bandit(contexts: usize, arms: usize) -> Result<Self> {
        if contexts == 0 || arms < 2 {
            return Err(config_err("softmax_bandit needs a context and at least two arms"));
        }
        Ok(Self {
            kind: PolicyKind::SoftmaxBandit,
            vocab_size: arms,
            max_len: 1,
            eos: None,
            features: FeatureMap::Context { contexts },
            feature_dim: contexts,
        })
    }

    /// Sequence policy over digits plus end-of-sequence for prompts whose two
    /// digits range over `0..=max_digit`.
    pub fn linear_seq(max_digit: u32) -> Result<Self> {
        if max_digit > 9 {
            return Err(config_err("linear_seq digits must be at most 9"));
        }
        let digits = max_digit as usize + 1;
        let feature_dim = 1 + DIGIT_MAX_LEN * digits * digits + (DIGIT_VOCAB + 1) + 1;
        Ok(Self {
            kind: PolicyKind::LinearSeq,
            vocab_size: DIGIT_VOCAB,
            max_len: DIGIT_MAX_LEN,
            eos: Some(EOS_TOKEN),
            features: FeatureMap::DigitPair { digits },
            feature_dim,
        })
    }

    /// The policy class matching a task's prompts and vocabulary.
    pub fn for_task(task: &SyntheticTask) -> Self {
        match task.spec() {
            TaskSpec::GroupBandit { contexts, arms } => Self::softmax_bandit(contexts, arms),
            TaskSpec::DigitSum { max_digit } => Self::linear_seq(max_digit),
        }
        .expect("task specs are validated on construction")
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn eos(&self) -> Option<u32> {
        self.eos
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn param_dim(&self) -> usize {
        self.vocab_size * self.feature_dim
    }

    pub fn check_prompt(&self, prompt: &Prompt) -> Result<()> {
        let ok = match self.features {
            FeatureMap::Context { contexts } => {
                prompt.tokens.len() == 1 && (prompt.tokens[0] as usize) < contexts
            }
            FeatureMap::DigitPair { digits } => {
                prompt.tokens.len() == 2 && prompt.tokens.iter().all(|&d| (d as usize) < digits)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SfpoError::Data(format!("prompt {:?} does not fit the policy", prompt.tokens)))
        }
    }

    /// Sparse features `(index, value)` for the next token after `prefix`.
    pub fn features(&self, prompt: &Prompt, prefix: &[u32]) -> Vec<(usize, f64)> {
        match self.features {
            FeatureMap::Context { .. } => vec![(prompt.tokens[0] as usize, 1.0)],
            FeatureMap::DigitPair { digits } => {
                let (a, b) = (prompt.tokens[0] as usize, prompt.tokens[1] as usize);
                let t = prefix.len().min(self.max_len - 1);
                let prev_base = 1 + self.max_len * digits * digits;
                let prev = prefix.last().map_or(DIGIT_VOCAB, |&p| p as usize);
                let sum_index = prev_base + DIGIT_VOCAB + 1;
                vec![
                    (0, 1.0),
                    (1 + (t * digits + a) * digits + b, 1.0),
                    (prev_base + prev, 1.0),
                    (sum_index, (a + b) as f64 / 18.0),
                ]
            }
        }
    }

    fn logits_from(&self, theta: &ParameterVector, features: &[(usize, f64)]) -> Vec<f64> {
        let f = self.feature_dim;
        let th = theta.as_slice();
        (0..self.vocab_size)
            .map(|a| features.iter().map(|&(j, v)| th[a * f + j] * v).sum())
            .collect()
    }

    /// Temperature-1 log-probabilities of the next token.
    pub fn log_probs(&self, theta: &ParameterVector, prompt: &Prompt, prefix: &[u32]) -> Vec<f64> {
        log_softmax(&self.logits_from(theta, &self.features(prompt, prefix)))
    }

    pub(crate) fn positions(
        &self,
        theta: &ParameterVector,
        prompt: &Prompt,
        response: &[u32],
    ) -> Result<Vec<Position>> {
        theta.check_dim(self.param_dim())?;
        self.check_prompt(prompt)?;
        if response.is_empty() || response.len() > self.max_len {
            return Err(SfpoError::Data(format!(
                "response length {} outside 1..={}",
                response.len(),
                self.max_len
            )));
        }
        response
            .iter()
            .enumerate()
            .map(|(t, &token)| {
                if token as usize >= self.vocab_size {
                    return Err(SfpoError::Data(format!(
                        "token {token} outside vocabulary of size {}",
                        self.vocab_size
                    )));
                }
                if self.eos == Some(token) && t + 1 != response.len() {
                    return Err(SfpoError::Data("end-of-sequence before the last position".into()));
                }
                let features = self.features(prompt, &response[..t]);
                let log_probs = log_softmax(&self.logits_from(theta, &features));
                Ok(Position { features, log_probs, token })
            })
            .collect()
    }

    /// Adds `coeff * d log pi(token) / d theta` for one position into `out`.
    pub(crate) fn add_score(&self, position: &Position, coeff: f64, out: &mut [f64]) {
        if coeff == 0.0 {
            return;
        }
        let f = self.feature_dim;
        for (a, &lp) in position.log_probs.iter().enumerate() {
            let indicator = if a == position.token as usize { 1.0 } else { 0.0 };
            let w = coeff * (indicator - lp.exp());
            if w == 0.0 {
                continue;
            }
            for &(j, v) in &position.features {
                out[a * f + j] += w * v;
            }
        }
    }

    /// Exact per-token log-probabilities and score vectors of a response.
    pub fn logprob_and_grad(
        &self,
        theta: &ParameterVector,
        prompt: &Prompt,
        response: &[u32],
    ) -> Result<(Vec<f64>, Vec<ParameterVector>)> {
        let positions = self.positions(theta, prompt, response)?;
        let mut logprobs = Vec::with_capacity(positions.len());
        let mut scores = Vec::with_capacity(positions.len());
        for pos in &positions {
            logprobs.push(pos.log_probs[pos.token as usize]);
            let mut score = vec![0.0; self.param_dim()];
            self.add_score(pos, 1.0, &mut score);
            scores.push(ParameterVector::new(score));
        }
        Ok((logprobs, scores))
    }

    /// Samples one response: temperature scaling, then nucleus truncation.
    ///
    /// Returns the tokens and their untruncated temperature-1 log-probabilities.
    pub fn sample_response<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prompt: &Prompt,
        temperature: f64,
        top_p: f64,
        rng: &mut R,
    ) -> (Vec<u32>, Vec<f64>) {
        let mut tokens = Vec::with_capacity(self.max_len);
        let mut logprobs = Vec::with_capacity(self.max_len);
        for _ in 0..self.max_len {
            let logits = self.logits_from(theta, &self.features(prompt, &tokens));
            let base = log_softmax(&logits);
            let token = sample_nucleus(&logits, temperature, top_p, rng);
            tokens.push(token);
            logprobs.push(base[token as usize]);
            if self.eos == Some(token) {
                break;
            }
        }
        (tokens, logprobs)
    }
}

fn sample_nucleus<R: Rng + ?Sized>(logits: &[f64], temperature: f64, top_p: f64, rng: &mut R) -> u32 {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let probs: Vec<f64> = log_softmax(&scaled).into_iter().map(f64::exp).collect();

    let mut order: Vec<usize> = (0..probs.len()).collect();
    if top_p < 1.0 {
        // stable: ties keep vocabulary order
        order.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]));
        let mut mass = 0.0;
        let mut keep = 0;
        for &i in &order {
            mass += probs[i];
            keep += 1;
            if mass >= top_p {
                break;
            }
        }
        order.truncate(keep);
    }
    let total: f64 = order.iter().map(|&i| probs[i]).sum();
    let mut u = rng.random::<f64>() * total;
    for &i in &order {
        u -= probs[i];
        if u < 0.0 {
            return i as u32;
        }
    }
    // rounding left a sliver of mass: fall back to the last nonzero candidate
    *order.iter().rev().find(|&&i| probs[i] > 0.0).unwrap_or(&order[0]) as u32
}
