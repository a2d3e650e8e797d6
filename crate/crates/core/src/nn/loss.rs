use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clipped to at least this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `exp(z - max z) / Σ exp(z - max z)` over a rank-1 tensor.
pub fn softmax<S: Scalar>(z: &Tensor<S>) -> Tensor<S> {
    let max = z.data().iter().copied().fold(S::neg_infinity(), S::max);
    let e = z.map(|v| (v - max).exp());
    let total = e.sum();
    e.map(|v| v / total)
}

fn check_target(target: usize, classes: usize) -> Result<()> {
    if target >= classes {
        return Err(Error::Index {
            what: "class",
            index: target,
            len: classes,
        });
    }
    Ok(())
}

/// Cross-entropy of a probability vector against `target`, with the
/// probability clipped to `[PROB_FLOOR, 1]`. Returns the loss and its
/// gradient with respect to the probabilities.
pub fn cross_entropy<S: Scalar>(probs: &Tensor<S>, target: usize) -> Result<(S, Tensor<S>)> {
    check_target(target, probs.len())?;
    let floor = S::of(PROB_FLOOR);
    let p = probs.data()[target].max(floor).min(S::one());
    let mut grad = Tensor::zeros_like(probs);
    if probs.data()[target] >= floor {
        grad.data_mut()[target] = -S::one() / p;
    }
    Ok((-p.ln(), grad))
}

/// Softmax fused with cross-entropy. Takes logits; the gradient with
/// respect to the logits is `softmax(z) - onehot(target)`.
pub fn softmax_xent_loss<S: Scalar>(logits: &Tensor<S>, target: usize) -> Result<(S, Tensor<S>)> {
    check_target(target, logits.len())?;
    let mut p = softmax(logits);
    let (loss, _) = cross_entropy(&p, target)?;
    p.data_mut()[target] -= S::one();
    Ok((loss, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_loss_is_log_classes() {
        let p = Tensor::filled(&[50], 1.0 / 50.0);
        let (loss, _) = cross_entropy(&p, 17).unwrap();
        assert!((loss - 50f64.ln()).abs() < 1e-12);
        assert!((loss - 3.9120).abs() < 1e-4);
    }

    #[test]
    fn certain_prediction_has_zero_loss() {
        let p = Tensor::vector(vec![0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&p, 1).unwrap().0, 0.0);
        let (wrong, _) = cross_entropy(&p, 0).unwrap();
        assert!((wrong - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn target_out_of_range() {
        let p = Tensor::filled(&[3], 1.0 / 3.0);
        assert!(matches!(cross_entropy(&p, 3), Err(Error::Index { .. })));
        assert!(softmax_xent_loss(&p, 7).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = random_tensor(&[9], &mut rng).map(|v| v * 5.0);
        let p = softmax(&z);
        assert!((p.sum() - 1.0).abs() < 1e-12);
        let q = softmax(&z.map(|v| v + 1000.0));
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let z = random_tensor(&[6], &mut rng).map(|v| v * 2.0);
        let (_, g) = softmax_xent_loss(&z, 4).unwrap();
        let num = numeric_grad(&z, |z| softmax_xent_loss(z, 4).unwrap().0);
        for (a, n) in g.data().iter().zip(num.data()) {
            assert!((a - n).abs() < 1e-6);
        }
        assert_grad_close(&g, &num, 1e-4, "xent");
    }
}
