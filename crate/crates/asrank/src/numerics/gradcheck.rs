//! Central finite-difference gradient checking.
//!
//! The checker never looks at how the analytic gradient was produced; it
//! re-evaluates the scalar function at `p ± eps` per entry and compares.
//! That independence is the point: the graph's backward pass is validated
//! against plain arithmetic on the forward pass alone.

use super::array::{cast, Array, Scalar};
use crate::error::{Error, Result};

/// Outcome of a gradient check, with enough detail to point at the worst
/// entry when something is off.
#[derive(Debug, Clone)]
pub struct GradCheckReport<F> {
    pub max_rel_error: F,
    /// Index of the parameter array holding the worst entry.
    pub worst_param: usize,
    /// Flat index of the worst entry within that array.
    pub worst_entry: usize,
    pub worst_analytic: F,
    pub worst_numeric: F,
}

/// Compares `analytic` gradients of `f` at `params` against central finite
/// differences with step `eps`, returning the maximum relative error
/// `|a - n| / max(|a|, |n|, 1e-8)` over all entries.
pub fn grad_check<F: Scalar>(
    f: impl FnMut(&[Array<F>]) -> Result<F>,
    params: &[Array<F>],
    analytic: &[Array<F>],
    eps: F,
) -> Result<GradCheckReport<F>> {
    grad_check_with_floor(f, params, analytic, eps, cast::<F>(1e-8))
}

/// `grad_check` with an explicit denominator floor. The floor decides how
/// small a gradient entry must be before the comparison becomes absolute
/// rather than relative; checks over functions with large values need a
/// floor above `|f| · machine_eps / eps`, the noise the differences
/// themselves carry, or near-zero entries report pure noise.
pub fn grad_check_with_floor<F: Scalar>(
    mut f: impl FnMut(&[Array<F>]) -> Result<F>,
    params: &[Array<F>],
    analytic: &[Array<F>],
    eps: F,
    floor: F,
) -> Result<GradCheckReport<F>> {
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameter arrays but {} gradient arrays",
            params.len(),
            analytic.len()
        )));
    }
    if eps <= F::zero() {
        return Err(Error::Config(format!("grad_check eps must be positive, got {eps}")));
    }
    if floor <= F::zero() {
        return Err(Error::Config(format!("grad_check floor must be positive, got {floor}")));
    }
    let two = cast::<F>(2.0);
    let mut work: Vec<Array<F>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: F::zero(),
        worst_param: 0,
        worst_entry: 0,
        worst_analytic: F::zero(),
        worst_numeric: F::zero(),
    };
    for (pi, grad) in analytic.iter().enumerate() {
        if grad.shape() != params[pi].shape() {
            return Err(Error::Shape(format!(
                "gradient {pi} shape {:?} vs parameter shape {:?}",
                grad.shape(),
                params[pi].shape()
            )));
        }
        for ei in 0..grad.len() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + eps;
            let up = f(&work)?;
            work[pi].data_mut()[ei] = orig - eps;
            let down = f(&work)?;
            work[pi].data_mut()[ei] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!(
                    "function value while perturbing parameter {pi} entry {ei}"
                )));
            }
            let numeric = (up - down) / (two * eps);
            let a = grad.data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = pi;
                report.worst_entry = ei;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
