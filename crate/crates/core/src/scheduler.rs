//! Entropy-triggered interpolation schedule.
//!
//! Each step's policy entropy is scored against a rolling window of the
//! previous `window` readings. The first reading whose z-score reaches the
//! threshold fixes the trigger step `s* = s + 1`; from then on the
//! interpolation factor is switched off (or decayed linearly to zero), turning
//! the update into a plain one-shot step for the rest of the run.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Rolling window of recent entropy readings.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBuffer {
    window: usize,
    values: VecDeque<f64>,
}

impl EntropyBuffer {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(config_err("entropy window must be positive"));
        }
        Ok(Self { window, values: VecDeque::with_capacity(window) })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.window
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    /// Inserts a reading, evicting the oldest once the window is full.
    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    /// Accumulated as offsets from the oldest entry, so a constant buffer
    /// returns its value exactly.
    pub fn mean(&self) -> f64 {
        let Some(&pivot) = self.values.front() else {
            return 0.0;
        };
        pivot + self.values.iter().map(|v| v - pivot).sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation of the buffer contents.
    pub fn std(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.values.len() as f64;
        var.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaStrategy {
    /// `alpha = 0` for every step at or after the trigger.
    HardReset,
    /// `alpha` falls affinely from `alpha0` to zero over `decay_steps` steps.
    LinearDecay { decay_steps: usize },
}

/// Which excursions of the z-score fire the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerSide {
    /// `|Z| >= tau`
    TwoSided,
    /// `Z <= -tau` (entropy dropping)
    Below,
    /// `Z >= tau`
    Above,
}

impl TriggerSide {
    fn fires(self, z: f64, threshold: f64) -> bool {
        match self {
            TriggerSide::TwoSided => z.abs() >= threshold,
            TriggerSide::Below => z <= -threshold,
            TriggerSide::Above => z >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaScheduler {
    alpha0: f64,
    threshold: f64,
    eps_num: f64,
    strategy: AlphaStrategy,
    side: TriggerSide,
    entropy_control: bool,
    trigger_step: Option<usize>,
    buffer: EntropyBuffer,
}

impl AlphaScheduler {
    pub fn new(alpha0: f64, window: usize, threshold: f64, eps_num: f64, strategy: AlphaStrategy) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha0) {
            return Err(config_err(format!("alpha0 must lie in [0, 1], got {alpha0}")));
        }
        if !(threshold > 0.0) {
            return Err(config_err("z-score threshold must be positive"));
        }
        if !(eps_num > 0.0) {
            return Err(config_err("eps_num must be positive"));
        }
        if let AlphaStrategy::LinearDecay { decay_steps: 0 } = strategy {
            return Err(config_err("linear decay needs at least one step"));
        }
        Ok(Self {
            alpha0,
            threshold,
            eps_num,
            strategy,
            side: TriggerSide::TwoSided,
            entropy_control: true,
            trigger_step: None,
            buffer: EntropyBuffer::new(window)?,
        })
    }

    pub fn with_side(mut self, side: TriggerSide) -> Self {
        self.side = side;
        self
    }

    /// With entropy control off, z-scores are still reported but never trigger.
    pub fn with_entropy_control(mut self, enabled: bool) -> Self {
        self.entropy_control = enabled;
        self
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn trigger_step(&self) -> Option<usize> {
        self.trigger_step
    }

    pub fn buffer(&self) -> &EntropyBuffer {
        &self.buffer
    }

    pub fn strategy(&self) -> AlphaStrategy {
        self.strategy
    }

    /// Interpolation factor for step `s`, from triggers recorded before `s`.
    pub fn alpha_for_step(&self, s: usize) -> f64 {
        match self.trigger_step {
            None => self.alpha0,
            Some(star) if s < star => self.alpha0,
            Some(star) => match self.strategy {
                AlphaStrategy::HardReset => 0.0,
                AlphaStrategy::LinearDecay { decay_steps } => {
                    let elapsed = (s - star) as f64;
                    (self.alpha0 * (1.0 - elapsed / decay_steps as f64)).max(0.0)
                }
            },
        }
    }

    /// Scores `entropy` against the buffer as it stood before this reading,
    /// records a trigger if warranted, then inserts the reading.
    ///
    /// Returns `None` while the buffer is still filling.
    pub fn observe_entropy(&mut self, entropy: f64, s: usize) -> Option<f64> {
        let z = if self.buffer.is_full() {
            let z = (entropy - self.buffer.mean()) / (self.buffer.std() + self.eps_num);
            if self.entropy_control && self.trigger_step.is_none() && self.side.fires(z, self.threshold) {
                self.trigger_step = Some(s + 1);
            }
            Some(z)
        } else {
            None
        };
        self.buffer.push(entropy);
        z
    }
}
