//! Optimizer step rules applied at every inner step and at the slow correction.
//!
//! The rule owns its accumulator state. Within one SFPO step the same state
//! keeps evolving through the fast trajectory and the slow correction; the
//! reposition stage only touches parameters.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::params::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    PlainSgd,
    /// AdamW with decoupled weight decay.
    AdaptiveMoment {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    pub fn adamw() -> Self {
        OptimizerKind::AdaptiveMoment {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MomentState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRule {
    kind: OptimizerKind,
    step_size: f64,
    grad_clip_norm: Option<f64>,
    state: Option<MomentState>,
}

impl OptimizerRule {
    pub fn new(kind: OptimizerKind, step_size: f64, grad_clip_norm: Option<f64>) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(config_err(format!("step size must be positive, got {step_size}")));
        }
        if let Some(c) = grad_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(config_err(format!("grad clip norm must be positive, got {c}")));
            }
        }
        if let OptimizerKind::AdaptiveMoment { beta1, beta2, eps, weight_decay } = kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                return Err(config_err("adam betas must lie in [0, 1)"));
            }
            if !(eps > 0.0) || !(weight_decay >= 0.0) {
                return Err(config_err("adam eps must be positive and weight decay non-negative"));
            }
        }
        Ok(Self {
            kind,
            step_size,
            grad_clip_norm,
            state: None,
        })
    }

    pub fn sgd(step_size: f64) -> Result<Self> {
        Self::new(OptimizerKind::PlainSgd, step_size, None)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn grad_clip_norm(&self) -> Option<f64> {
        self.grad_clip_norm
    }

    /// True when a step is exactly `theta - step_size * grad`.
    pub fn is_plain_unclipped(&self) -> bool {
        matches!(self.kind, OptimizerKind::PlainSgd) && self.grad_clip_norm.is_none()
    }

    /// Accumulator vectors, when the rule keeps any.
    pub fn moments(&self) -> Option<(&[f64], &[f64])> {
        self.state.as_ref().map(|s| (s.first.as_slice(), s.second.as_slice()))
    }

    /// Applies one update in place.
    pub fn step(&mut self, theta: &mut ParameterVector, grad: &ParameterVector) {
        debug_assert_eq!(theta.dim(), grad.dim());
        let mut scale = 1.0;
        if let Some(max_norm) = self.grad_clip_norm {
            let norm = grad.norm();
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        let eta = self.step_size;
        match self.kind {
            OptimizerKind::PlainSgd => {
                if scale == 1.0 {
                    theta.axpy(-eta, grad);
                } else {
                    theta.axpy(-eta * scale, grad);
                }
            }
            OptimizerKind::AdaptiveMoment { beta1, beta2, eps, weight_decay } => {
                let dim = theta.dim();
                let state = self.state.get_or_insert_with(|| MomentState {
                    first: vec![0.0; dim],
                    second: vec![0.0; dim],
                    steps: 0,
                });
                state.steps += 1;
                let bias1 = 1.0 - beta1.powi(state.steps);
                let bias2 = 1.0 - beta2.powi(state.steps);
                let params = theta.as_mut_slice();
                for (i, p) in params.iter_mut().enumerate() {
                    let g = grad[i] * scale;
                    let m = &mut state.first[i];
                    let v = &mut state.second[i];
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= eta * (weight_decay * *p);
                    *p -= eta * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
