//! Central finite differences for checking hand-written backward passes.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which gradients are compared absolutely rather than
/// relatively. Finite differences at `FD_STEP` carry ~1e-11 of noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` at `x` by central differences with step `FD_STEP`.
pub fn numeric_grad<S: Scalar>(x: &Tensor<S>, mut f: impl FnMut(&Tensor<S>) -> f64) -> Tensor<S> {
    numeric_grad_with_step(x, FD_STEP, &mut f)
}

pub fn numeric_grad_with_step<S: Scalar>(
    x: &Tensor<S>,
    step: f64,
    mut f: impl FnMut(&Tensor<S>) -> f64,
) -> Tensor<S> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros_like(x);
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + S::of(step);
        let plus = f(&probe);
        probe.data_mut()[i] = orig - S::of(step);
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = S::of((plus - minus) / (2.0 * step));
    }
    grad
}

/// `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Largest elementwise relative error between two same-shaped tensors.
pub fn max_relative_error<S: Scalar>(analytic: &Tensor<S>, numeric: &Tensor<S>) -> f64 {
    assert_eq!(analytic.dims(), numeric.dims(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a.as_f64(), n.as_f64()))
        .fold(0.0, f64::max)
}
