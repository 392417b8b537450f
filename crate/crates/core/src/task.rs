//! Synthetic tasks with deterministic 0/1 rewards.
//!
//! `group_bandit`: each prompt is one of `contexts` contexts; exactly one of
//! `arms` single-token responses is correct. `digit_sum`: each prompt is a pair
//! of digits and the correct response spells their sum followed by the
//! end-of-sequence token.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Digits occupy tokens `0..=9`; this token terminates a `digit_sum` response.
pub const EOS_TOKEN: u32 = 10;
pub const DIGIT_VOCAB: usize = 11;
/// Longest `digit_sum` response: two digits plus end-of-sequence.
pub const DIGIT_MAX_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub id: u32,
    /// `[context]` for the bandit, `[a, b]` for digit sums.
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskSpec {
    GroupBandit { contexts: usize, arms: usize },
    DigitSum { max_digit: u32 },
}

/// Difficulty knobs recognised by [`make_task`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskKnobs {
    pub contexts: usize,
    pub arms: usize,
    pub max_digit: u32,
}

impl Default for TaskKnobs {
    fn default() -> Self {
        Self { contexts: 4, arms: 16, max_digit: 9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    spec: TaskSpec,
    /// Correct arm per context (bandit only).
    correct_arms: Vec<u32>,
}

pub fn make_task(kind: &str, knobs: &TaskKnobs, seed: u64) -> Result<SyntheticTask> {
    let spec = match kind {
        "group_bandit" => TaskSpec::GroupBandit { contexts: knobs.contexts, arms: knobs.arms },
        "digit_sum" => TaskSpec::DigitSum { max_digit: knobs.max_digit },
        other => return Err(config_err(format!("unknown task kind '{other}'"))),
    };
    SyntheticTask::new(spec, seed)
}

impl SyntheticTask {
    pub fn new(spec: TaskSpec, seed: u64) -> Result<Self> {
        let correct_arms = match spec {
            TaskSpec::GroupBandit { contexts, arms } => {
                if contexts == 0 {
                    return Err(config_err("group_bandit needs at least one context"));
                }
                if arms < 2 {
                    return Err(config_err("group_bandit needs at least two arms"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..contexts).map(|_| rng.random_range(0..arms as u32)).collect()
            }
            TaskSpec::DigitSum { max_digit } => {
                if max_digit > 9 {
                    return Err(config_err("digit_sum max_digit must be at most 9"));
                }
                Vec::new()
            }
        };
        Ok(Self { spec, correct_arms })
    }

    /// Bandit task with the correct arm of every context fixed by the caller.
    pub fn bandit_with_arms(arms: usize, correct_arms: Vec<u32>) -> Result<Self> {
        if arms < 2 || correct_arms.is_empty() {
            return Err(config_err("bandit needs two arms and one context"));
        }
        if correct_arms.iter().any(|&a| a as usize >= arms) {
            return Err(config_err("correct arm outside the arm range"));
        }
        Ok(Self {
            spec: TaskSpec::GroupBandit { contexts: correct_arms.len(), arms },
            correct_arms,
        })
    }

    pub fn spec(&self) -> TaskSpec {
        self.spec
    }

    pub fn kind_name(&self) -> &'static str {
        match self.spec {
            TaskSpec::GroupBandit { .. } => "group_bandit",
            TaskSpec::DigitSum { .. } => "digit_sum",
        }
    }

    /// Every distinct prompt the task can produce, in id order.
    pub fn all_prompts(&self) -> Vec<Prompt> {
        match self.spec {
            TaskSpec::GroupBandit { contexts, .. } => (0..contexts as u32)
                .map(|c| Prompt { id: c, tokens: vec![c] })
                .collect(),
            TaskSpec::DigitSum { max_digit } => {
                let d = max_digit + 1;
                (0..d)
                    .flat_map(|a| (0..d).map(move |b| Prompt { id: a * d + b, tokens: vec![a, b] }))
                    .collect()
            }
        }
    }

    pub fn sample_prompts<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Prompt> {
        let pool = self.all_prompts();
        (0..count)
            .map(|_| pool.choose(rng).expect("prompt pool is never empty").clone())
            .collect()
    }

    pub fn correct_response(&self, prompt: &Prompt) -> Vec<u32> {
        match self.spec {
            TaskSpec::GroupBandit { .. } => vec![self.correct_arms[prompt.tokens[0] as usize]],
            TaskSpec::DigitSum { .. } => {
                let sum = prompt.tokens[0] + prompt.tokens[1];
                let mut out = if sum >= 10 { vec![sum / 10, sum % 10] } else { vec![sum] };
                out.push(EOS_TOKEN);
                out
            }
        }
    }

    pub fn reward(&self, prompt: &Prompt, response: &[u32]) -> f64 {
        if response == self.correct_response(prompt).as_slice() {
            1.0
        } else {
            0.0
        }
    }
}
