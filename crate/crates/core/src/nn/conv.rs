//! Stride-1 2-D cross-correlation with zero same-padding.
//!
//! Layout: inputs are (H, W, c_in), kernels are (k, kh, kw, c_in), outputs
//! are (H, W, k). Kernel extents must be odd so padding is symmetric and the
//! spatial shape is preserved.

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerGradients};
use crate::scalar::Scalar;
use crate::tensor::{dot, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2DParams<S> {
    pub kernels: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Conv2DParams<S> {
    pub fn new(kernels: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        let p = Conv2DParams { kernels, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(filters: usize, kh: usize, kw: usize, in_channels: usize) -> Self {
        Conv2DParams {
            kernels: Tensor::zeros(&[filters, kh, kw, in_channels]),
            bias: Tensor::zeros(&[filters]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kd = self.kernels.dims();
        if kd.len() != 4 {
            return Err(Error::dims("conv2d kernels", self.kernels.shape(), "(k, kh, kw, c_in)"));
        }
        if kd[1].is_multiple_of(2) || kd[2].is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "conv2d kernel extents must be odd, got {}x{}",
                kd[1], kd[2]
            )));
        }
        if self.bias.dims() != [kd[0]] {
            return Err(Error::dims("conv2d bias", self.bias.shape(), kd[0]));
        }
        Ok(())
    }

    pub fn filters(&self) -> usize {
        self.kernels.dims()[0]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.dims()[1], self.kernels.dims()[2])
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.dims()[3]
    }
}

struct Geometry {
    h: usize,
    w: usize,
    c_in: usize,
    k: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn check<S: Scalar>(x: &Tensor<S>, p: &Conv2DParams<S>) -> Result<Self> {
        p.validate()?;
        let xd = x.dims();
        if xd.len() != 3 {
            return Err(Error::dims("conv2d input", x.shape(), "(H, W, c_in)"));
        }
        if xd[2] != p.in_channels() {
            return Err(Error::dims("conv2d channels", x.shape(), p.kernels.shape()));
        }
        let (kh, kw) = p.kernel_size();
        if kh > xd[0] || kw > xd[1] {
            return Err(Error::dims("conv2d kernel larger than input", x.shape(), p.kernels.shape()));
        }
        Ok(Geometry {
            h: xd[0],
            w: xd[1],
            c_in: xd[2],
            k: p.filters(),
            kh,
            kw,
        })
    }

    /// Input coordinate covered by kernel tap `d` at output coordinate `i`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn tap(i: usize, d: usize, half: usize, extent: usize) -> Option<usize> {
        (i + d).checked_sub(half).filter(|&v| v < extent)
    }
}

/// Convolve `x` with every filter, add the per-filter bias and apply
/// `activation` pointwise. Output shape is (H, W, k).
pub fn conv2d_forward<S: Scalar>(x: &Tensor<S>, p: &Conv2DParams<S>, activation: Activation) -> Result<Tensor<S>> {
    if !matches!(activation, Activation::Relu | Activation::Linear) {
        return Err(Error::Parameter(format!("conv2d does not support {activation:?}")));
    }
    let g = Geometry::check(x, p)?;
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let xs = x.data();
    let ks = p.kernels.data();
    let bs = p.bias.data();
    let mut out = vec![S::zero(); g.h * g.w * g.k];

    for i in 0..g.h {
        for j in 0..g.w {
            let o = &mut out[(i * g.w + j) * g.k..(i * g.w + j + 1) * g.k];
            o.copy_from_slice(bs);
            for di in 0..g.kh {
                let Some(ii) = Geometry::tap(i, di, ph, g.h) else { continue };
                for dj in 0..g.kw {
                    let Some(jj) = Geometry::tap(j, dj, pw, g.w) else { continue };
                    let xin = &xs[(ii * g.w + jj) * g.c_in..(ii * g.w + jj + 1) * g.c_in];
                    for (f, of) in o.iter_mut().enumerate() {
                        let base = ((f * g.kh + di) * g.kw + dj) * g.c_in;
                        *of += dot(&ks[base..base + g.c_in], xin);
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec(vec![g.h, g.w, g.k], out)?;
    Ok(activation.apply_pointwise(out))
}

/// Gradients of a convolution given `upstream`, the loss gradient with
/// respect to the pre-activation output. Callers fold the activation
/// derivative in first (see [`crate::nn::relu_backward`]).
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    p: &Conv2DParams<S>,
    upstream: &Tensor<S>,
) -> Result<LayerGradients<Conv2DParams<S>, S>> {
    let g = Geometry::check(x, p)?;
    if upstream.dims() != [g.h, g.w, g.k] {
        return Err(Error::dims("conv2d upstream", upstream.shape(), [g.h, g.w, g.k]));
    }
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let xs = x.data();
    let ks = p.kernels.data();
    let up = upstream.data();
    let mut dk = vec![S::zero(); ks.len()];
    let mut db = vec![S::zero(); g.k];
    let mut dx = vec![S::zero(); xs.len()];

    for i in 0..g.h {
        for j in 0..g.w {
            let u = &up[(i * g.w + j) * g.k..(i * g.w + j + 1) * g.k];
            for (b, &uf) in db.iter_mut().zip(u) {
                *b += uf;
            }
            for di in 0..g.kh {
                let Some(ii) = Geometry::tap(i, di, ph, g.h) else { continue };
                for dj in 0..g.kw {
                    let Some(jj) = Geometry::tap(j, dj, pw, g.w) else { continue };
                    let xo = (ii * g.w + jj) * g.c_in;
                    for (f, &uf) in u.iter().enumerate() {
                        if uf == S::zero() {
                            continue;
                        }
                        let base = ((f * g.kh + di) * g.kw + dj) * g.c_in;
                        for c in 0..g.c_in {
                            dk[base + c] += uf * xs[xo + c];
                            dx[xo + c] += uf * ks[base + c];
                        }
                    }
                }
            }
        }
    }

    Ok(LayerGradients {
        params: Conv2DParams {
            kernels: Tensor::from_vec(p.kernels.dims().to_vec(), dk)?,
            bias: Tensor::from_vec(vec![g.k], db)?,
        },
        input: Tensor::from_vec(x.dims().to_vec(), dx)?,
    })
}
