//! The quadratic validation suite behind `sfpo verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfpo::quad::{verify_fast_trajectory, verify_proximal_equivalence, QuadraticProblem};
use sfpo::{fast_trajectory, GradientOracle, OptimizerRule, ParameterVector};

pub const TRAJECTORY_TOLERANCE: f64 = 1e-10;
pub const PROXIMAL_TOLERANCE: f64 = 1e-12;
pub const PROXIMAL_ALPHAS: [f64; 4] = [0.25, 0.5, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCase {
    pub problem: usize,
    pub dim: usize,
    pub rank: usize,
    pub inner_steps: usize,
    pub step_size: f64,
    /// `step_size < 1 / ||H||`.
    pub contractive: bool,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalCase {
    pub problem: usize,
    pub alpha: f64,
    pub first_order_residual: f64,
    pub max_abs_diff: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub trajectory: Vec<TrajectoryCase>,
    pub proximal: Vec<ProximalCase>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.trajectory.iter().all(|c| c.passed) && self.proximal.iter().all(|c| c.passed)
    }

    pub fn max_trajectory_error(&self) -> f64 {
        self.trajectory.iter().map(|c| c.max_abs_error).fold(0.0, f64::max)
    }

    pub fn max_proximal_residual(&self) -> f64 {
        self.proximal
            .iter()
            .map(|c| c.first_order_residual.max(c.max_abs_diff))
            .fold(0.0, f64::max)
    }
}

/// Random positive semi-definite problems (some rank-deficient) with step
/// sizes below `1 / ||H||`; each is checked at `K` = 3, 7 and one more value,
/// and the reposition of its `K` = 3 trajectory is checked at every alpha.
pub fn run_quad_suite(problems: usize, seed: u64) -> sfpo::Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectory = Vec::new();
    let mut proximal = Vec::new();
    for p in 0..problems {
        let dim = rng.random_range(1..=24);
        let rank = rng.random_range(1..=dim);
        let prob = QuadraticProblem::random_psd(dim, rank, rng.random());
        let eta = rng.random_range(0.05..0.95) / prob.spectral_norm();
        let theta0 = ParameterVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());

        let extra = rng.random_range(1..=8);
        for k in [3, 7, extra] {
            let r = verify_fast_trajectory(&prob, eta, k, &theta0, TRAJECTORY_TOLERANCE)?;
            trajectory.push(TrajectoryCase {
                problem: p,
                dim,
                rank,
                inner_steps: k,
                step_size: eta,
                contractive: r.contractive,
                max_abs_error: r.max_abs_error,
                passed: r.passed,
            });
        }

        let k = 3;
        let iterates = fast_trajectory(&theta0, &(), &prob, &mut OptimizerRule::sgd(eta)?, k)?;
        let mut sum = ParameterVector::zeros(dim);
        for it in &iterates[..k] {
            sum.axpy(1.0, &prob.grad(it, &())?);
        }
        for alpha in PROXIMAL_ALPHAS {
            let r = verify_proximal_equivalence(&theta0, &sum, eta, alpha, k, PROXIMAL_TOLERANCE)?;
            proximal.push(ProximalCase {
                problem: p,
                alpha,
                first_order_residual: r.first_order_residual,
                max_abs_diff: r.max_abs_diff,
                passed: r.passed,
            });
        }
    }
    Ok(SuiteReport { trajectory, proximal })
}
