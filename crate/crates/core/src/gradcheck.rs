//! Central finite-difference gradient checks.

use crate::error::Result;
use crate::params::ParameterVector;
use crate::sfpo::GradientOracle;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: ParameterVector,
    pub numeric: ParameterVector,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||, floor)`.
    pub relative_error: f64,
}

/// Central differences `(L(theta + h e_i) - L(theta - h e_i)) / 2h` per coordinate.
pub fn numeric_gradient<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    oracle: &O,
    theta: &ParameterVector,
    batch: &B,
    h: f64,
) -> Result<ParameterVector> {
    let mut probe = theta.clone();
    let mut out = Vec::with_capacity(theta.dim());
    for i in 0..theta.dim() {
        let x = theta[i];
        probe[i] = x + h;
        let plus = oracle.loss(&probe, batch)?;
        probe[i] = x - h;
        let minus = oracle.loss(&probe, batch)?;
        probe[i] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(ParameterVector::new(out))
}

/// Compares the oracle's analytic gradient with central differences.
///
/// `floor` keeps the relative error meaningful when both gradients vanish.
pub fn check_gradient<B: ?Sized, O: GradientOracle<B> + ?Sized>(
    oracle: &O,
    theta: &ParameterVector,
    batch: &B,
    h: f64,
    floor: f64,
) -> Result<GradCheck> {
    let analytic = oracle.grad(theta, batch)?;
    let numeric = numeric_gradient(oracle, theta, batch, h)?;
    let scale = analytic.norm().max(numeric.norm()).max(floor);
    let relative_error = analytic.sub(&numeric).norm() / scale;
    Ok(GradCheck { analytic, numeric, relative_error })
}
