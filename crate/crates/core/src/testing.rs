use rand::Rng;

use crate::gradcheck::max_relative_error;
use crate::tensor::Tensor;

pub use crate::gradcheck::numeric_grad;

pub fn random_tensor(dims: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn assert_grad_close(analytic: &Tensor<f64>, numeric: &Tensor<f64>, tol: f64, what: &str) {
    let err = max_relative_error(analytic, numeric);
    assert!(err <= tol, "{what}: max relative error {err:e} > {tol:e}");
}
