//! The three-stage slow-fast update.
//!
//! One step starting from `theta0` runs `K` inner optimizer steps on a single
//! batch (fast trajectory), pulls the endpoint back toward `theta0` by the
//! factor `alpha` (reposition), then takes one more optimizer step at the
//! repositioned point (slow correction). With `alpha = 0` the first two stages
//! are skipped and the step is a plain one-shot policy-gradient update.

use crate::error::{config_err, Result, SfpoError, Stage};
use crate::optim::OptimizerRule;
use crate::params::ParameterVector;

/// Loss and gradient of a scalar objective over a batch of data.
///
/// Implementations must be deterministic: identical inputs give identical
/// outputs, bit for bit.
pub trait GradientOracle<B: ?Sized> {
    fn loss(&self, theta: &ParameterVector, batch: &B) -> Result<f64>;
    fn grad(&self, theta: &ParameterVector, batch: &B) -> Result<ParameterVector>;
}

impl<B: ?Sized, O: GradientOracle<B> + ?Sized> GradientOracle<B> for &O {
    fn loss(&self, theta: &ParameterVector, batch: &B) -> Result<f64> {
        (**self).loss(theta, batch)
    }
    fn grad(&self, theta: &ParameterVector, batch: &B) -> Result<ParameterVector> {
        (**self).grad(theta, batch)
    }
}

/// Oracle assembled from a pair of closures that ignore the batch.
pub struct FnOracle<L, G> {
    loss: L,
    grad: G,
}

impl<L, G> FnOracle<L, G>
where
    L: Fn(&ParameterVector) -> f64,
    G: Fn(&ParameterVector) -> ParameterVector,
{
    pub fn new(loss: L, grad: G) -> Self {
        Self { loss, grad }
    }
}

impl<B: ?Sized, L, G> GradientOracle<B> for FnOracle<L, G>
where
    L: Fn(&ParameterVector) -> f64,
    G: Fn(&ParameterVector) -> ParameterVector,
{
    fn loss(&self, theta: &ParameterVector, _batch: &B) -> Result<f64> {
        Ok((self.loss)(theta))
    }
    fn grad(&self, theta: &ParameterVector, _batch: &B) -> Result<ParameterVector> {
        Ok((self.grad)(theta))
    }
}

/// Parameter-side record of one slow-fast step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepUpdate {
    /// `theta^{s,0..K}`; only `theta^{s,0}` when the fast stages were skipped.
    pub fast_iterates: Vec<ParameterVector>,
    pub repositioned: ParameterVector,
    pub next_slow: ParameterVector,
    pub alpha_used: f64,
    pub grad_evaluations: usize,
    pub slow_correction_applied: bool,
}

impl StepUpdate {
    pub fn start(&self) -> &ParameterVector {
        &self.fast_iterates[0]
    }
}

/// Toggles for ablations of the composed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOptions {
    pub slow_correction: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self { slow_correction: true }
    }
}

fn checked_grad<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    oracle: &O,
    theta: &ParameterVector,
    batch: &B,
    stage: Stage,
) -> Result<ParameterVector> {
    let g = oracle.grad(theta, batch)?;
    g.check_dim(theta.dim())?;
    if let Some(coordinate) = g.first_non_finite() {
        return Err(SfpoError::NonFiniteGradient { stage, coordinate });
    }
    Ok(g)
}

fn apply_step<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    theta: &ParameterVector,
    batch: &B,
    oracle: &O,
    rule: &mut OptimizerRule,
    stage: Stage,
) -> Result<ParameterVector> {
    let g = checked_grad(oracle, theta, batch, stage)?;
    let mut next = theta.clone();
    rule.step(&mut next, &g);
    if let Some(coordinate) = next.first_non_finite() {
        return Err(SfpoError::NonFiniteParameters { stage, coordinate });
    }
    Ok(next)
}

fn check_start(start: &ParameterVector) -> Result<()> {
    if let Some(i) = start.first_non_finite() {
        return Err(SfpoError::Data(format!("start parameters non-finite at coordinate {i}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(config_err(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Stage I: `K` optimizer steps on the same batch. Returns all `K + 1` iterates.
pub fn fast_trajectory<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    start: &ParameterVector,
    batch: &B,
    oracle: &O,
    rule: &mut OptimizerRule,
    inner_steps: usize,
) -> Result<Vec<ParameterVector>> {
    fast_trajectory_over(start, &|_| batch, oracle, rule, inner_steps)
}

fn fast_trajectory_over<'b, B: ?Sized + 'b, O: GradientOracle<B> + ?Sized>(
    start: &ParameterVector,
    batch_for: &dyn Fn(usize) -> &'b B,
    oracle: &O,
    rule: &mut OptimizerRule,
    inner_steps: usize,
) -> Result<Vec<ParameterVector>> {
    if inner_steps == 0 {
        return Err(config_err("fast trajectory needs at least one inner step"));
    }
    check_start(start)?;
    let mut iterates = Vec::with_capacity(inner_steps + 1);
    iterates.push(start.clone());
    for k in 0..inner_steps {
        let next = apply_step(&iterates[k], batch_for(k), oracle, rule, Stage::FastTrajectory(k))?;
        iterates.push(next);
    }
    Ok(iterates)
}

/// Stage II: `start + alpha * (endpoint - start)`.
pub fn reposition(start: &ParameterVector, endpoint: &ParameterVector, alpha: f64) -> Result<ParameterVector> {
    check_alpha(alpha)?;
    endpoint.check_dim(start.dim())?;
    if alpha == 0.0 {
        return Ok(start.clone());
    }
    if alpha == 1.0 {
        return Ok(endpoint.clone());
    }
    Ok(start
        .as_slice()
        .iter()
        .zip(endpoint.as_slice())
        .map(|(s, e)| s + alpha * (e - s))
        .collect::<Vec<_>>()
        .into())
}

/// Slow correction: one optimizer step at the repositioned point.
pub fn slow_correction<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    repositioned: &ParameterVector,
    batch: &B,
    oracle: &O,
    rule: &mut OptimizerRule,
) -> Result<ParameterVector> {
    check_start(repositioned)?;
    apply_step(repositioned, batch, oracle, rule, Stage::SlowCorrection)
}

/// One full slow-fast step on a single batch.
pub fn sfpo_step<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    start: &ParameterVector,
    batch: &B,
    oracle: &O,
    rule: &mut OptimizerRule,
    alpha: f64,
    inner_steps: usize,
) -> Result<StepUpdate> {
    sfpo_step_with(start, &|_| batch, oracle, rule, alpha, inner_steps, StageOptions::default())
}

/// As [`sfpo_step`], with the batch chosen per optimizer step.
///
/// `batch_for(i)` is queried with the optimizer-step ordinal: `0..K` for the
/// inner steps and `K` for the slow correction.
pub fn sfpo_step_with<'b, B: ?Sized + 'b, O: GradientOracle<B> + ?Sized>(
    start: &ParameterVector,
    batch_for: &dyn Fn(usize) -> &'b B,
    oracle: &O,
    rule: &mut OptimizerRule,
    alpha: f64,
    inner_steps: usize,
    options: StageOptions,
) -> Result<StepUpdate> {
    check_alpha(alpha)?;
    check_start(start)?;

    let skip_fast = alpha == 0.0 || inner_steps == 0;
    let (fast_iterates, repositioned) = if skip_fast {
        (vec![start.clone()], start.clone())
    } else {
        let iterates = fast_trajectory_over(start, batch_for, oracle, rule, inner_steps)?;
        let tilde = reposition(start, &iterates[inner_steps], alpha)?;
        (iterates, tilde)
    };
    let mut grad_evaluations = fast_iterates.len() - 1;

    let next_slow = if options.slow_correction {
        grad_evaluations += 1;
        let slow_batch = batch_for(if skip_fast { 0 } else { inner_steps });
        slow_correction(&repositioned, slow_batch, oracle, rule)?
    } else {
        repositioned.clone()
    };

    Ok(StepUpdate {
        fast_iterates,
        repositioned,
        next_slow,
        alpha_used: alpha,
        grad_evaluations,
        slow_correction_applied: options.slow_correction,
    })
}

/// The collapsed single-formula form of a plain-gradient step:
/// `theta0 - eta * (alpha * sum_k grad(theta_k) + grad(theta_tilde))`.
///
/// Only meaningful for unclipped plain SGD; it serves as an independent route
/// against which the staged composition is checked.
pub fn unified_update<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    start: &ParameterVector,
    batch: &B,
    oracle: &O,
    step_size: f64,
    alpha: f64,
    inner_steps: usize,
) -> Result<ParameterVector> {
    check_alpha(alpha)?;
    check_start(start)?;
    let dim = start.dim();
    let mut grad_sum = ParameterVector::zeros(dim);
    if alpha > 0.0 {
        let mut theta = start.clone();
        for k in 0..inner_steps {
            let g = checked_grad(oracle, &theta, batch, Stage::FastTrajectory(k))?;
            grad_sum.axpy(1.0, &g);
            theta.axpy(-step_size, &g);
        }
    }
    let mut tilde = start.clone();
    tilde.axpy(-alpha * step_size, &grad_sum);
    let slow = checked_grad(oracle, &tilde, batch, Stage::SlowCorrection)?;

    let mut combined = grad_sum;
    combined.scale(alpha);
    combined.axpy(1.0, &slow);
    let mut next = start.clone();
    next.axpy(-step_size, &combined);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_square() -> FnOracle<impl Fn(&ParameterVector) -> f64, impl Fn(&ParameterVector) -> ParameterVector> {
        FnOracle::new(|t: &ParameterVector| 0.5 * t.dot(t), |t: &ParameterVector| t.clone())
    }

    fn constant() -> FnOracle<impl Fn(&ParameterVector) -> f64, impl Fn(&ParameterVector) -> ParameterVector> {
        FnOracle::new(|_: &ParameterVector| 3.0, |t: &ParameterVector| ParameterVector::zeros(t.dim()))
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn fast_trajectory_on_half_square() {
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        let it = fast_trajectory(&vec![1.0].into(), &(), &half_square(), &mut rule, 3).unwrap();
        let got: Vec<f64> = it.iter().map(|p| p[0]).collect();
        for (g, e) in got.iter().zip([1.0, 0.9, 0.81, 0.729]) {
            assert!(close(*g, e), "{got:?}");
        }
    }

    #[test]
    fn single_inner_step_is_one_baseline_step() {
        let oracle = half_square();
        let start: ParameterVector = vec![0.4, -1.3].into();
        let mut rule = OptimizerRule::sgd(0.05).unwrap();
        let it = fast_trajectory(&start, &(), &oracle, &mut rule, 1).unwrap();
        let mut baseline = start.clone();
        OptimizerRule::sgd(0.05).unwrap().step(&mut baseline, &oracle.grad(&start, &()).unwrap());
        assert_eq!(it[1], baseline);
    }

    #[test]
    fn constant_loss_is_a_fixed_point() {
        let start: ParameterVector = vec![0.3, 0.7, -2.0].into();
        let mut rule = OptimizerRule::sgd(0.5).unwrap();
        let it = fast_trajectory(&start, &(), &constant(), &mut rule, 4).unwrap();
        assert!(it.iter().all(|p| *p == start));
        for alpha in [0.0, 0.5, 1.0] {
            let step = sfpo_step(&start, &(), &constant(), &mut rule, alpha, 5).unwrap();
            assert_eq!(step.next_slow, start);
        }
    }

    #[test]
    fn zero_inner_steps_rejected_by_fast_trajectory() {
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        assert!(matches!(
            fast_trajectory(&vec![1.0].into(), &(), &half_square(), &mut rule, 0),
            Err(SfpoError::Config(_))
        ));
    }

    #[test]
    fn reposition_examples() {
        let s: ParameterVector = vec![0.0, 0.0].into();
        let e: ParameterVector = vec![1.0, 2.0].into();
        assert_eq!(reposition(&s, &e, 0.0).unwrap(), s);
        assert_eq!(reposition(&s, &e, 1.0).unwrap(), e);
        let mid = reposition(&s, &e, 0.8).unwrap();
        assert!(close(mid[0], 0.8) && close(mid[1], 1.6));
        assert!(reposition(&s, &e, 1.2).is_err());
        assert!(reposition(&s, &e, -0.1).is_err());
        assert!(matches!(
            reposition(&s, &vec![1.0].into(), 0.5),
            Err(SfpoError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn slow_correction_examples() {
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        let out = slow_correction(&vec![0.7832].into(), &(), &half_square(), &mut rule).unwrap();
        assert!(close(out[0], 0.70488));
        let start: ParameterVector = vec![2.0].into();
        assert_eq!(slow_correction(&start, &(), &constant(), &mut rule).unwrap(), start);
    }

    #[test]
    fn composed_step_matches_hand_evaluation() {
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        let oracle = half_square();
        let step = sfpo_step(&vec![1.0].into(), &(), &oracle, &mut rule, 0.8, 3).unwrap();
        assert_eq!(step.fast_iterates.len(), 4);
        assert!(close(step.repositioned[0], 0.7832));
        assert!(close(step.next_slow[0], 0.70488));
        let unified = unified_update(&vec![1.0].into(), &(), &oracle, 0.1, 0.8, 3).unwrap();
        assert!(close(unified[0], 0.70488));
        assert_eq!(step.grad_evaluations, 4);
    }

    #[test]
    fn alpha_zero_is_one_baseline_step() {
        let oracle = half_square();
        let start: ParameterVector = vec![1.5, -0.5].into();
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        let step = sfpo_step(&start, &(), &oracle, &mut rule, 0.0, 3).unwrap();
        assert_eq!(step.grad_evaluations, 1);
        assert_eq!(step.fast_iterates.len(), 1);
        let mut expected = start.clone();
        expected.axpy(-0.1, &oracle.grad(&start, &()).unwrap());
        assert_eq!(step.next_slow, expected);
    }

    #[test]
    fn without_slow_correction_and_alpha_zero_nothing_moves() {
        let start: ParameterVector = vec![1.5, -0.5].into();
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        let step = sfpo_step_with(
            &start,
            &|_| &(),
            &half_square(),
            &mut rule,
            0.0,
            3,
            StageOptions { slow_correction: false },
        )
        .unwrap();
        assert_eq!(step.next_slow, start);
        assert_eq!(step.grad_evaluations, 0);
    }

    #[test]
    fn non_finite_gradient_names_inner_index() {
        // gradient blows up once theta leaves the unit interval
        let oracle = FnOracle::new(
            |_: &ParameterVector| 0.0,
            |t: &ParameterVector| {
                if t[0] > 1.05 {
                    vec![f64::NAN].into()
                } else {
                    vec![-1.0].into()
                }
            },
        );
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        let err = sfpo_step(&vec![0.9].into(), &(), &oracle, &mut rule, 0.5, 4).unwrap_err();
        assert_eq!(
            err,
            SfpoError::NonFiniteGradient { stage: Stage::FastTrajectory(2), coordinate: 0 }
        );
    }

    #[test]
    fn alpha_out_of_range_is_config_error() {
        let mut rule = OptimizerRule::sgd(0.1).unwrap();
        assert!(matches!(
            sfpo_step(&vec![0.0].into(), &(), &half_square(), &mut rule, 1.5, 2),
            Err(SfpoError::Config(_))
        ));
    }
}
