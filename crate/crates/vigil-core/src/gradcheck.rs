//! Finite-difference verification of analytic gradients.
//!
//! Run in `f64`: central differences in single precision are too noisy to
//! resolve the 1e-4 acceptance threshold.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One evaluation of a differentiable scalar function: the value and the
/// analytic gradient with respect to the probed parameters.
pub struct GradEval {
    pub value: f64,
    pub grad: Tensor<f64>,
}

/// Compare the analytic gradient of `f` at `theta` against central
/// differences, returning the worst relative error over all coordinates.
///
/// For each coordinate the numeric derivative is
/// `(f(θ+h·e) − f(θ−h·e)) / 2h` and the reported error is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// `f` must be deterministic (disable dropout); this is enforced by
/// evaluating the baseline twice and rejecting any difference.
pub fn finite_diff_check<F>(mut f: F, theta: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> Result<GradEval>,
{
    if h <= 0.0 {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let base = f(theta)?;
    let again = f(theta)?;
    if base.value != again.value {
        return Err(Error::Oracle(format!(
            "function is not deterministic: {} vs {} at the same point",
            base.value, again.value
        )));
    }
    if base.grad.shape() != theta.shape() {
        return Err(Error::shape("finite_diff_check", theta.shape(), base.grad.shape()));
    }

    let mut worst = 0.0f64;
    let mut probe = theta.clone();
    for i in 0..theta.numel() {
        let orig = theta.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?.value;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?.value;
        probe.data_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let analytic = base.grad.data()[i];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}
