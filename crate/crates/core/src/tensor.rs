//! Dense CHW tensors and the GEMM entry point used by the convolution layers.
//!
//! Everything in the network engine is generic over [`Scalar`] so that the
//! same layers run in `f32` for training and inference and in `f64` when a
//! test needs finite-difference precision.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Element type of the engine: `f32`, `f64`, or a dual number over either.
///
/// Ordering comparisons look at the primal value only, which gives
/// almost-everywhere derivatives through piecewise-linear activations.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self;
    /// Primal value as `f64`.
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn recip(self) -> Self {
        Self::one() / self
    }
    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }

    fn zero() -> Self {
        Self::lit(0.0)
    }

    fn one() -> Self {
        Self::lit(1.0)
    }

    fn from_usize(v: usize) -> Self {
        Self::lit(v as f64)
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `c = alpha * a * b + beta * c` over strided matrices
    /// (`a` is `m×k`, `b` is `k×n`, `c` is `m×n`).
    ///
    /// # Safety
    /// Every element addressed through the pointers and strides must be
    /// in bounds, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        a_strides: (isize, isize),
        b: *const Self,
        b_strides: (isize, isize),
        beta: Self,
        c: *mut Self,
        c_strides: (isize, isize),
    );
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn lit(v: f64) -> Self {
                v as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }

            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }

            fn abs(self) -> Self {
                <$t>::abs(self)
            }

            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                a_strides: (isize, isize),
                b: *const Self,
                b_strides: (isize, isize),
                beta: Self,
                c: *mut Self,
                c_strides: (isize, isize),
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                $f(
                    m,
                    k,
                    n,
                    alpha,
                    a,
                    a_strides.0,
                    a_strides.1,
                    b,
                    b_strides.0,
                    b_strides.1,
                    beta,
                    c,
                    c_strides.0,
                    c_strides.1,
                );
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

const LANES: usize = 8;

/// Sum with independent partial accumulators so the loop vectorizes.
pub fn sum<S: Scalar>(xs: &[S]) -> S {
    let mut acc = [S::zero(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let mut total = tail.iter().copied().sum::<S>();
    for a in acc {
        total += a;
    }
    total
}

pub fn dot<S: Scalar>(xs: &[S], ys: &[S]) -> S {
    assert_eq!(xs.len(), ys.len(), "dot length mismatch");
    let mut acc = [S::zero(); LANES];
    let (xc, yc) = (xs.chunks_exact(LANES), ys.chunks_exact(LANES));
    let tail: S = xc
        .remainder()
        .iter()
        .zip(yc.remainder())
        .map(|(&a, &b)| a * b)
        .sum();
    for (a, b) in xc.zip(yc) {
        for ((s, &x), &y) in acc.iter_mut().zip(a).zip(b) {
            *s += x * y;
        }
    }
    let mut total = tail;
    for a in acc {
        total += a;
    }
    total
}

/// Row-major `[rows, cols]` operand description for [`matmul`].
#[derive(Clone, Copy, Debug)]
pub enum Op {
    /// Use the buffer as stored.
    N,
    /// Use the transpose of the stored matrix.
    T,
}

/// `c (m×n) = a' (m×k) · b' (k×n) (+ c if accumulate)`, where `a'`/`b'` are
/// the stored matrices optionally transposed. Stored shapes are `[m,k]` or
/// `[k,m]` for `a` and `[k,n]` or `[n,k]` for `b`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    op_a: Op,
    b: &[S],
    op_b: Op,
    c: &mut [S],
    accumulate: bool,
) {
    let a_strides = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let b_strides = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    assert!(a.len() >= m * k && b.len() >= k * n, "matmul input too small");
    assert!(c.len() >= m * n, "matmul output too small");
    let beta = if accumulate { S::one() } else { S::zero() };
    // SAFETY: extents checked above; strides describe the stored matrices
    // or their transposes, and `c` is a distinct mutable buffer.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            S::one(),
            a.as_ptr(),
            a_strides,
            b.as_ptr(),
            b_strides,
            beta,
            c.as_mut_ptr(),
            (n as isize, 1),
        );
    }
}

/// A single image-like tensor laid out channel-major (`[c][h][w]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![S::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor size mismatch");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn full(channels: usize, height: usize, width: usize, value: S) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> S {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut S {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        assert!(self.same_shape(other), "shape mismatch");
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    pub fn mean(&self) -> S {
        sum(&self.data) / S::from_usize(self.data.len())
    }

    pub fn dot(&self, other: &Self) -> S {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| T::lit(v.to_f64()))
                .collect(),
        }
    }
}
