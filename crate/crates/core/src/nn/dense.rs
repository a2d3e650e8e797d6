use crate::error::{Error, Result};
use crate::nn::{Activation, LayerGradients};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer, `W` of shape (out, in) and `b` of shape (out).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams<S> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

impl<S: Scalar> DenseParams<S> {
    pub fn zeros(out: usize, input: usize) -> Self {
        DenseParams {
            w: Tensor::zeros(&[out, input]),
            b: Tensor::zeros(&[out]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.rank() != 2 || self.b.dims() != [self.w.dims()[0]] {
            return Err(Error::dims("dense params", self.w.shape(), self.b.shape()));
        }
        Ok(())
    }

    pub fn out_features(&self) -> usize {
        self.w.dims()[0]
    }

    pub fn in_features(&self) -> usize {
        self.w.dims()[1]
    }
}

/// `activation(W·x + b)`.
pub fn dense_forward<S: Scalar>(x: &Tensor<S>, p: &DenseParams<S>, activation: Activation) -> Result<Tensor<S>> {
    p.validate()?;
    if x.rank() != 1 {
        return Err(Error::dims("dense input", x.shape(), p.in_features()));
    }
    let z = p.w.matvec(x.data())?;
    let z = Tensor::vector(z).add(&p.b)?;
    Ok(activation.apply_pointwise(z))
}

/// Gradients given `upstream` with respect to the pre-activation `W·x + b`.
pub fn dense_backward<S: Scalar>(
    x: &Tensor<S>,
    p: &DenseParams<S>,
    upstream: &Tensor<S>,
) -> Result<LayerGradients<DenseParams<S>, S>> {
    p.validate()?;
    if x.len() != p.in_features() || upstream.len() != p.out_features() {
        return Err(Error::dims("dense backward", (x.len(), upstream.len()), p.w.shape()));
    }
    let mut dw = Tensor::zeros_like(&p.w);
    dw.add_outer(upstream.data(), x.data());
    let mut dx = vec![S::zero(); x.len()];
    p.w.matvec_t_acc(upstream.data(), &mut dx);
    Ok(LayerGradients {
        params: DenseParams {
            w: dw,
            b: upstream.clone(),
        },
        input: Tensor::vector(dx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_layer_softmax_is_uniform() {
        let p = DenseParams::<f64>::zeros(50, 7);
        let x = Tensor::vector(vec![1.0; 7]);
        let y = dense_forward(&x, &p, Activation::Softmax).unwrap();
        assert!(y.data().iter().all(|&v| (v - 1.0 / 50.0).abs() < 1e-15));
    }

    #[test]
    fn identity_linear() {
        let p = DenseParams {
            w: Tensor::<f64>::identity(4),
            b: Tensor::zeros(&[4]),
        };
        let x = Tensor::vector(vec![0.5, -1.0, 2.0, 3.0]);
        assert_eq!(dense_forward(&x, &p, Activation::Linear).unwrap(), x);
    }

    #[test]
    fn shape_mismatch() {
        let p = DenseParams::<f64>::zeros(3, 4);
        assert!(matches!(
            dense_forward(&Tensor::zeros(&[5]), &p, Activation::Tanh),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = DenseParams {
            w: random_tensor(&[3, 5], &mut rng),
            b: random_tensor(&[3], &mut rng),
        };
        let x = random_tensor(&[5], &mut rng);
        let up = random_tensor(&[3], &mut rng);
        let loss = |x: &Tensor<f64>, p: &DenseParams<f64>| {
            let y = dense_forward(x, p, Activation::Linear).unwrap();
            y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = dense_backward(&x, &p, &up).unwrap();
        assert_grad_close(&g.input, &numeric_grad(&x, |x| loss(x, &p)), 1e-4, "dense dx");
        let num_w = numeric_grad(&p.w, |w| loss(&x, &DenseParams { w: w.clone(), b: p.b.clone() }));
        assert_grad_close(&g.params.w, &num_w, 1e-4, "dense dW");
        let num_b = numeric_grad(&p.b, |b| loss(&x, &DenseParams { w: p.w.clone(), b: b.clone() }));
        assert_grad_close(&g.params.b, &num_b, 1e-4, "dense db");
    }
}
