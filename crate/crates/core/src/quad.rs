//! Closed-form checks of the fast trajectory and reposition on quadratics.
//!
//! For `L(theta) = c + g0.theta + 1/2 theta' H theta` the gradient field is
//! exactly linear, so `K` plain steps of size `eta` from `theta0` move by
//! `-[I - (I - eta H)^K] H^+ g` with `g = grad L(theta0)`, null directions
//! moving by `-K eta g`. Along an eigendirection of curvature `lambda` the
//! scalar gain is `(1 - (1 - eta lambda)^K) / lambda`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Result, SfpoError};
use crate::optim::OptimizerRule;
use crate::params::ParameterVector;
use crate::sfpo::{fast_trajectory, reposition, GradientOracle};

/// Relative eigenvalue cutoff below which a direction counts as null.
pub const NULL_SPACE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    hessian: DMatrix<f64>,
    gradient_at_origin: DVector<f64>,
    offset: f64,
}

impl QuadraticProblem {
    pub fn new(hessian: DMatrix<f64>, gradient_at_origin: DVector<f64>, offset: f64) -> Result<Self> {
        let n = hessian.nrows();
        if n == 0 || hessian.ncols() != n || gradient_at_origin.len() != n {
            return Err(config_err("hessian must be square and match the gradient length"));
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 {
            return Err(config_err(format!("hessian asymmetric by {asym:e}")));
        }
        let problem = Self { hessian, gradient_at_origin, offset };
        let eig = problem.eigen();
        let floor = -NULL_SPACE_REL_TOL * problem.spectral_norm().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < floor) {
            return Err(config_err("hessian has a negative eigenvalue"));
        }
        Ok(problem)
    }

    /// Random PSD problem `H = A A' / rank` with `A` of shape `dim x rank`,
    /// so `rank < dim` leaves a null space.
    pub fn random_psd(dim: usize, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(dim, rank.max(1), |_, _| rng.random_range(-1.0..1.0));
        let mut h = &a * a.transpose() / rank.max(1) as f64;
        if rank == 0 {
            h.fill(0.0);
        }
        // exact symmetry
        let h = (&h + h.transpose()) * 0.5;
        let g0 = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        Self::new(h, g0, rng.random_range(-1.0..1.0)).expect("A A' is symmetric PSD")
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigen().eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.hessian.clone())
    }

    pub fn gradient(&self, theta: &ParameterVector) -> ParameterVector {
        let t = DVector::from_column_slice(theta.as_slice());
        let g = &self.gradient_at_origin + &self.hessian * t;
        ParameterVector::new(g.as_slice().to_vec())
    }

    pub fn value(&self, theta: &ParameterVector) -> f64 {
        let t = DVector::from_column_slice(theta.as_slice());
        self.offset + self.gradient_at_origin.dot(&t) + 0.5 * t.dot(&(&self.hessian * &t))
    }
}

impl GradientOracle<()> for QuadraticProblem {
    fn loss(&self, theta: &ParameterVector, _batch: &()) -> Result<f64> {
        theta.check_dim(self.dim())?;
        Ok(self.value(theta))
    }
    fn grad(&self, theta: &ParameterVector, _batch: &()) -> Result<ParameterVector> {
        theta.check_dim(self.dim())?;
        Ok(self.gradient(theta))
    }
}

/// `(1 - (1 - eta lambda)^K) / lambda`, with value `K eta` at `lambda = 0`.
///
/// Evaluated as the geometric sum `eta * sum_{j<K} (1 - eta lambda)^j`, which
/// is exact at zero and free of cancellation for small curvature.
pub fn spectral_gain(lambda: f64, eta: f64, inner_steps: usize) -> f64 {
    let r = 1.0 - eta * lambda;
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..inner_steps {
        sum += term;
        term *= r;
    }
    eta * sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub vector: ParameterVector,
    /// False when `eta >= 1 / ||H||_2`; the value is still computed.
    pub contractive: bool,
}

fn check_eta_k(eta: f64, inner_steps: usize) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(config_err("step size must be positive"));
    }
    if inner_steps == 0 {
        return Err(config_err("closed form needs K >= 1"));
    }
    Ok(())
}

/// One eigendirection's contribution to the displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenComponent {
    pub curvature: f64,
    pub null_direction: bool,
    pub gain: f64,
    /// Component of the starting gradient along this direction.
    pub gradient_projection: f64,
}

fn decompose(
    prob: &QuadraticProblem,
    theta0: &ParameterVector,
    eta: f64,
    inner_steps: usize,
) -> (Vec<EigenComponent>, DMatrix<f64>, bool) {
    let eig = prob.eigen();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let cutoff = NULL_SPACE_REL_TOL * norm;
    let g = DVector::from_column_slice(prob.gradient(theta0).as_slice());
    let components = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&lambda, v)| {
            let null_direction = lambda.abs() <= cutoff;
            let curvature = if null_direction { 0.0 } else { lambda };
            EigenComponent {
                curvature,
                null_direction,
                gain: spectral_gain(curvature, eta, inner_steps),
                gradient_projection: v.dot(&g),
            }
        })
        .collect();
    let contractive = norm == 0.0 || eta < 1.0 / norm;
    (components, eig.eigenvectors, contractive)
}

/// Closed-form `K`-step displacement from the origin.
pub fn closed_form_displacement(prob: &QuadraticProblem, eta: f64, inner_steps: usize) -> Result<Displacement> {
    closed_form_displacement_at(prob, &ParameterVector::zeros(prob.dim()), eta, inner_steps)
}

/// Closed-form `K`-step displacement from `theta0`.
pub fn closed_form_displacement_at(
    prob: &QuadraticProblem,
    theta0: &ParameterVector,
    eta: f64,
    inner_steps: usize,
) -> Result<Displacement> {
    check_eta_k(eta, inner_steps)?;
    theta0.check_dim(prob.dim())?;
    let (components, vectors, contractive) = decompose(prob, theta0, eta, inner_steps);
    let mut d = DVector::zeros(prob.dim());
    for (c, v) in components.iter().zip(vectors.column_iter()) {
        d -= v * (c.gain * c.gradient_projection);
    }
    Ok(Displacement { vector: ParameterVector::new(d.as_slice().to_vec()), contractive })
}

/// Per-direction comparison of simulated and closed-form displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCheck {
    pub component: EigenComponent,
    pub simulated: f64,
    pub closed_form: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub inner_steps: usize,
    pub step_size: f64,
    pub contractive: bool,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub directions: Vec<DirectionCheck>,
}

/// Simulates the fast trajectory with plain SGD on the exact quadratic and
/// compares the endpoint displacement with the closed form.
pub fn verify_fast_trajectory(
    prob: &QuadraticProblem,
    eta: f64,
    inner_steps: usize,
    theta0: &ParameterVector,
    tolerance: f64,
) -> Result<TrajectoryReport> {
    let closed = closed_form_displacement_at(prob, theta0, eta, inner_steps)?;
    let mut rule = OptimizerRule::sgd(eta)?;
    let iterates = fast_trajectory(theta0, &(), prob, &mut rule, inner_steps)?;
    let simulated = iterates[inner_steps].sub(theta0);
    let max_abs_error = simulated.max_abs_diff(&closed.vector);

    let (components, vectors, contractive) = decompose(prob, theta0, eta, inner_steps);
    let sim = DVector::from_column_slice(simulated.as_slice());
    let cf = DVector::from_column_slice(closed.vector.as_slice());
    let directions = components
        .into_iter()
        .zip(vectors.column_iter())
        .map(|(component, v)| DirectionCheck { simulated: v.dot(&sim), closed_form: v.dot(&cf), component })
        .collect();

    Ok(TrajectoryReport {
        inner_steps,
        step_size: eta,
        contractive,
        max_abs_error,
        tolerance,
        passed: max_abs_error <= tolerance,
        directions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalReport {
    /// Analytic minimiser `start - alpha eta sum`.
    pub minimizer: ParameterVector,
    pub repositioned: ParameterVector,
    pub proximal_weight: f64,
    /// `max |minimizer - repositioned|`.
    pub max_abs_diff: f64,
    /// `max |sum + lambda (repositioned - start)|`.
    pub first_order_residual: f64,
    /// Minimiser of the averaged-gradient form with weight `1 / (alpha eta K)`.
    pub averaged_max_abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks that reposition solves the linearised proximal subproblem
/// `min <sum, theta - start> + lambda/2 ||theta - start||^2`, `lambda = 1 / (alpha eta)`.
pub fn verify_proximal_equivalence(
    start: &ParameterVector,
    inner_grad_sum: &ParameterVector,
    eta: f64,
    alpha: f64,
    inner_steps: usize,
    tolerance: f64,
) -> Result<ProximalReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(config_err(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    check_eta_k(eta, inner_steps)?;
    inner_grad_sum.check_dim(start.dim())?;

    let lambda = 1.0 / (alpha * eta);
    let mut minimizer = start.clone();
    minimizer.axpy(-alpha * eta, inner_grad_sum);

    let mut endpoint = start.clone();
    endpoint.axpy(-eta, inner_grad_sum);
    let repositioned = reposition(start, &endpoint, alpha)?;

    let first_order_residual = repositioned
        .as_slice()
        .iter()
        .zip(start.as_slice())
        .zip(inner_grad_sum.as_slice())
        .map(|((r, s), g)| (g + lambda * (r - s)).abs())
        .fold(0.0, f64::max);

    let k = inner_steps as f64;
    let averaged_weight = 1.0 / (alpha * eta * k);
    let averaged: ParameterVector = start
        .as_slice()
        .iter()
        .zip(inner_grad_sum.as_slice())
        .map(|(s, g)| s - (g / k) / averaged_weight)
        .collect::<Vec<_>>()
        .into();

    let max_abs_diff = minimizer.max_abs_diff(&repositioned);
    let averaged_max_abs_diff = averaged.max_abs_diff(&minimizer);
    let passed = max_abs_diff <= tolerance
        && first_order_residual <= tolerance
        && averaged_max_abs_diff <= tolerance;
    if !minimizer.is_finite() {
        return Err(SfpoError::Data("non-finite proximal minimiser".into()));
    }
    Ok(ProximalReport {
        minimizer,
        repositioned,
        proximal_weight: lambda,
        max_abs_diff,
        first_order_residual,
        averaged_max_abs_diff,
        tolerance,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(lambda: f64, g0: f64) -> QuadraticProblem {
        QuadraticProblem::new(DMatrix::from_element(1, 1, lambda), DVector::from_element(1, g0), 0.0).unwrap()
    }

    #[test]
    fn unit_curvature_example() {
        let d = closed_form_displacement(&one_d(1.0, 1.0), 0.1, 3).unwrap();
        assert!((d.vector[0] + 0.271).abs() < 1e-15);
        assert!(d.contractive);
    }

    #[test]
    fn flat_direction_moves_k_eta() {
        let d = closed_form_displacement(&one_d(0.0, 1.0), 0.1, 3).unwrap();
        assert!((d.vector[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_step_is_eta_g() {
        let p = QuadraticProblem::random_psd(5, 3, 2);
        let eta = 0.5 / p.spectral_norm();
        let d = closed_form_displacement(&p, eta, 1).unwrap();
        let mut expected = ParameterVector::new(p.gradient_at_origin.as_slice().to_vec());
        expected.scale(-eta);
        assert!(d.vector.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn gain_limits() {
        assert_eq!(spectral_gain(0.0, 0.1, 7), 0.1 * 7.0);
        assert!((spectral_gain(10.0, 0.1, 4) - 0.1).abs() < 1e-15);
        let lambda = 2.0;
        let g = spectral_gain(lambda, 0.1, 5);
        assert!(g < 1.0 / lambda);
        let rel = (spectral_gain(1e-12, 0.1, 5) - 0.5).abs() / 0.5;
        assert!(rel <= 1e-6);
    }

    #[test]
    fn large_step_flagged() {
        let d = closed_form_displacement(&one_d(4.0, 1.0), 0.3, 2).unwrap();
        assert!(!d.contractive);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QuadraticProblem::new(h, DVector::zeros(2), 0.0).is_err());
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QuadraticProblem::new(h, DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn zero_hessian_both_paths_agree() {
        let p = QuadraticProblem::new(DMatrix::zeros(3, 3), DVector::from_vec(vec![1.0, -2.0, 0.5]), 0.0).unwrap();
        let report = verify_fast_trajectory(&p, 0.1, 4, &ParameterVector::zeros(3), 1e-12).unwrap();
        assert!(report.passed);
        assert!(report.directions.iter().all(|d| d.component.null_direction));
        let d = closed_form_displacement(&p, 0.1, 4).unwrap();
        assert!((d.vector[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn proximal_unit_alpha() {
        let r = verify_proximal_equivalence(
            &vec![0.5, -0.5].into(),
            &vec![1.0, 1.0].into(),
            0.1,
            1.0,
            3,
            1e-12,
        )
        .unwrap();
        assert!(r.passed);
        assert!((r.minimizer[0] - 0.4).abs() < 1e-15);
        assert!((r.minimizer[1] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn proximal_small_alpha_contracts() {
        let start: ParameterVector = vec![1.0, 2.0].into();
        let r = verify_proximal_equivalence(&start, &vec![3.0, -4.0].into(), 0.1, 1e-9, 1, 1e-12).unwrap();
        assert!(r.minimizer.max_abs_diff(&start) < 1e-8);
        assert!(r.proximal_weight > 1e9);
        assert!(verify_proximal_equivalence(&start, &start, 0.1, 0.0, 1, 1e-12).is_err());
    }
}
