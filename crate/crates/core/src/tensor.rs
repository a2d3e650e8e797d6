//! Dense row-major tensors.
//!
//! Deliberately small: shapes are checked on every binary op, there is no
//! broadcasting and no views. Layers index into the flat buffer directly.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{relu, sigmoid, Scalar};

/// Extents of a tensor, outermost first. Every extent is at least 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Parameter(format!("invalid shape {dims:?}: extents must be >= 1")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Total element count.
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        if self.0.len() == 1 {
            write!(f, ",")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
}

impl ElementwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(self, ElementwiseOp::Add | ElementwiseOp::Sub | ElementwiseOp::Mul)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::dims("from_vec", &shape, data.len()));
        }
        Ok(Tensor { shape, data })
    }

    /// Zero tensor. Panics on a zero extent; use [`Shape::new`] to validate
    /// untrusted dimensions first.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, S::zero())
    }

    pub fn filled(dims: &[usize], value: S) -> Self {
        let shape = Shape::new(dims.to_vec()).expect("tensor extents must be >= 1");
        let data = vec![value; shape.numel()];
        Tensor { shape, data }
    }

    pub fn zeros_like(other: &Tensor<S>) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![S::zero(); other.data.len()],
        }
    }

    /// Rank-1 tensor over `values`. Panics if `values` is empty.
    pub fn vector(values: Vec<S>) -> Self {
        Tensor::from_vec(vec![values.len()], values).expect("non-empty vector")
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Element at a multi-index. Panics when out of range.
    pub fn at(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: S) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        let dims = self.dims();
        assert_eq!(index.len(), dims.len(), "index rank does not match tensor rank");
        index.iter().zip(dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {i} out of range for extent {d}");
            acc * d + i
        })
    }

    /// Row `i` of a rank-2 tensor as a slice.
    pub fn row(&self, i: usize) -> &[S] {
        let cols = self.dims()[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(&self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        self.clone().into_shape(dims)
    }

    pub fn into_shape(self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::dims("reshape", &self.shape, &shape));
        }
        Ok(Tensor { shape, data: self.data })
    }

    pub fn matmul(&self, other: &Tensor<S>) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.dims()[1] != other.dims()[0] {
            return Err(Error::dims("matmul", &self.shape, &other.shape));
        }
        let (m, k, p) = (self.dims()[0], self.dims()[1], other.dims()[1]);
        let mut out = vec![S::zero(); m * p];
        for i in 0..m {
            let out_row = &mut out[i * p..(i + 1) * p];
            for t in 0..k {
                let a = self.data[i * k + t];
                if a == S::zero() {
                    continue;
                }
                let b_row = &other.data[t * p..(t + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::from_vec(vec![m, p], out)
    }

    /// `self · x` for a rank-2 `self` of shape (m, k) and a length-k slice.
    pub fn matvec(&self, x: &[S]) -> Result<Vec<S>> {
        if self.rank() != 2 || self.dims()[1] != x.len() {
            return Err(Error::dims("matvec", &self.shape, x.len()));
        }
        Ok(self
            .data
            .chunks_exact(x.len())
            .map(|row| dot(row, x))
            .collect())
    }

    /// `selfᵀ · y` accumulated into `out`, for `self` of shape (m, k),
    /// `y` of length m and `out` of length k.
    pub fn matvec_t_acc(&self, y: &[S], out: &mut [S]) {
        let k = self.dims()[1];
        debug_assert_eq!(y.len(), self.dims()[0]);
        debug_assert_eq!(out.len(), k);
        for (row, &yi) in self.data.chunks_exact(k).zip(y) {
            if yi == S::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }

    /// `self += u ⊗ v` for a rank-2 `self` of shape (u.len(), v.len()).
    pub fn add_outer(&mut self, u: &[S], v: &[S]) {
        let k = v.len();
        debug_assert_eq!(self.dims(), &[u.len(), k]);
        for (row, &ui) in self.data.chunks_exact_mut(k).zip(u) {
            if ui == S::zero() {
                continue;
            }
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += ui * vj;
            }
        }
    }

    /// In-place `self += alpha · other`.
    pub fn axpy(&mut self, alpha: S, other: &Tensor<S>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dims("axpy", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: S) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor<S>, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dims("elementwise", &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor<S>) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn tanh(&self) -> Self {
        self.map(|v| v.tanh())
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn relu(&self) -> Self {
        self.map(relu)
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-type conversion, used by checkpoints which always store f64.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::of(v.as_f64())).collect(),
        }
    }
}

impl<S: fmt::Debug> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "[{:?}, {:?}, ... {} values]", self.data[0], self.data[1], self.data.len())
        }
    }
}

/// Apply `op` pointwise. Binary ops take `b` and require identical shapes;
/// unary ops must be called without `b`.
pub fn elementwise<S: Scalar>(op: ElementwiseOp, a: &Tensor<S>, b: Option<&Tensor<S>>) -> Result<Tensor<S>> {
    match (op, b) {
        (ElementwiseOp::Add, Some(b)) => a.add(b),
        (ElementwiseOp::Sub, Some(b)) => a.sub(b),
        (ElementwiseOp::Mul, Some(b)) => a.mul(b),
        (ElementwiseOp::Tanh, None) => Ok(a.tanh()),
        (ElementwiseOp::Sigmoid, None) => Ok(a.sigmoid()),
        (ElementwiseOp::Relu, None) => Ok(a.relu()),
        (op, _) if op.is_binary() => Err(Error::Parameter(format!("{op:?} needs a second operand"))),
        (op, _) => Err(Error::Parameter(format!("{op:?} is unary"))),
    }
}

pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    a.matmul(b)
}

pub fn reshape<S: Scalar>(a: &Tensor<S>, shape: &Shape) -> Result<Tensor<S>> {
    a.reshape(shape.dims().to_vec())
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}
