use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; in
/// inference mode the input is returned unchanged. The returned mask holds
/// 1 for kept elements and 0 for dropped ones.
pub fn dropout<S: Scalar, R: Rng + ?Sized>(
    x: &Tensor<S>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<S>, Tensor<S>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")));
    }
    let ones = Tensor::filled(x.dims(), S::one());
    if !training || rate == 0.0 {
        return Ok((x.clone(), ones));
    }
    let mut mask = ones;
    for m in mask.data_mut() {
        if rng.random::<f64>() < rate {
            *m = S::zero();
        }
    }
    let scale = S::of(1.0 / (1.0 - rate));
    let out = x.zip_map(&mask, |v, m| v * m * scale)?;
    Ok((out, mask))
}

pub fn dropout_backward<S: Scalar>(upstream: &Tensor<S>, mask: &Tensor<S>, rate: f64) -> Result<Tensor<S>> {
    let scale = S::of(1.0 / (1.0 - rate));
    upstream.zip_map(mask, |g, m| g * m * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let (y, m) = dropout(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn inference_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        for rate in [0.1, 0.5, 0.9] {
            assert_eq!(dropout(&x, rate, &mut rng, false).unwrap().0, x);
        }
    }

    #[test]
    fn rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f64>::zeros(&[2]);
        assert!(matches!(dropout(&x, 1.0, &mut rng, true), Err(Error::Parameter(_))));
        assert!(dropout(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn half_rate_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let n = 1_000_000;
        let x = Tensor::filled(&[n], 2.0f64);
        let (y, mask) = dropout(&x, 0.5, &mut rng, true).unwrap();
        let kept = mask.sum() / n as f64;
        assert!((kept - 0.5).abs() < 0.01, "survivor fraction {kept}");
        let mean = y.sum() / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "output mean {mean}");
    }
}
