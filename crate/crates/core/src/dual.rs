//! Forward-mode dual numbers over any [`Scalar`].
//!
//! Running the network's backward pass on duals differentiates the gradient
//! itself along the input tangent, which is how the gradient-penalty term
//! gets an exact parameter gradient.

use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::tensor::{Scalar, Tensor};

/// `re + ε·du` with `ε² = 0`. Equality and ordering compare `re` only.
#[derive(Clone, Copy, Debug, Default)]
#[repr(C)]
pub struct Dual<S> {
    pub re: S,
    pub du: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, du: S) -> Self {
        Self { re, du }
    }

    pub fn constant(re: S) -> Self {
        Self { re, du: S::zero() }
    }
}

impl<S: Scalar> PartialEq for Dual<S> {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl<S: Scalar> PartialOrd for Dual<S> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.du + o.du)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.du - o.du)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.du - q * o.du) / o.re)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Sum for Dual<S> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::constant(S::zero()), |a, b| a + b)
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn lit(v: f64) -> Self {
        Self::constant(S::lit(v))
    }

    fn to_f64(self) -> f64 {
        self.re.to_f64()
    }

    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Self::new(r, self.du / (S::lit(2.0) * r))
    }

    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Self::new(t, self.du * (S::one() - t * t))
    }

    fn abs(self) -> Self {
        if self.re < S::zero() {
            -self
        } else {
            self
        }
    }

    fn is_finite(self) -> bool {
        self.re.is_finite() && self.du.is_finite()
    }

    /// Three primal GEMMs over the interleaved `re`/`du` lanes:
    /// `re = A.re·B.re`, `du = A.du·B.re + A.re·B.du`.
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
        debug_assert!(alpha.du == S::zero() && beta.du == S::zero());
        let lanes = |s: (isize, isize)| (2 * s.0, 2 * s.1);
        let (a_re, b_re, c_re) = (a as *const S, b as *const S, c as *mut S);
        let (a_du, b_du, c_du) = (a_re.add(1), b_re.add(1), c_re.add(1));
        let (sa, sb, sc) = (lanes(a_strides), lanes(b_strides), lanes(c_strides));
        S::gemm_raw(m, k, n, alpha.re, a_re, sa, b_re, sb, beta.re, c_re, sc);
        S::gemm_raw(m, k, n, alpha.re, a_du, sa, b_re, sb, beta.re, c_du, sc);
        S::gemm_raw(m, k, n, alpha.re, a_re, sa, b_du, sb, S::one(), c_du, sc);
    }
}

/// Tensor of duals with the given primal values and tangent.
pub fn seed_tangent<S: Scalar>(x: &Tensor<S>, dx: &Tensor<S>) -> Tensor<Dual<S>> {
    let mut out = Tensor::zeros(x.channels, x.height, x.width);
    for ((o, &r), &d) in out.data.iter_mut().zip(&x.data).zip(&dx.data) {
        *o = Dual::new(r, d);
    }
    out
}

pub fn lift<S: Scalar>(v: &[S]) -> Vec<Dual<S>> {
    v.iter().map(|&r| Dual::constant(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{matmul, Op};

    #[test]
    fn arithmetic_derivatives() {
        let x = Dual::new(1.5f64, 1.0);
        let y = x * x / (x + Dual::lit(1.0)) - x.sqrt().tanh();
        let f = |v: f64| v * v / (v + 1.0) - v.sqrt().tanh();
        let fd = (f(1.5 + 1e-6) - f(1.5 - 1e-6)) / 2e-6;
        assert!((y.re - f(1.5)).abs() < 1e-12);
        assert!((y.du - fd).abs() < 1e-8);
    }

    #[test]
    fn gemm_product_rule() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<Dual<f64>> = (0..m * k)
            .map(|i| Dual::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let b: Vec<Dual<f64>> = (0..k * n)
            .map(|i| Dual::new((i as f64 * 0.7).cos(), (i as f64).sin()))
            .collect();
        for (op_a, op_b) in [(Op::N, Op::N), (Op::T, Op::T)] {
            let mut c = vec![Dual::lit(0.0); m * n];
            matmul(m, k, n, &a, op_a, &b, op_b, &mut c, false);
            for i in 0..m {
                for j in 0..n {
                    let ai = |p: usize| match op_a {
                        Op::N => a[i * k + p],
                        Op::T => a[p * m + i],
                    };
                    let bj = |p: usize| match op_b {
                        Op::N => b[p * n + j],
                        Op::T => b[j * k + p],
                    };
                    let want: Dual<f64> = (0..k).map(|p| ai(p) * bj(p)).sum();
                    assert!((c[i * n + j].re - want.re).abs() < 1e-12);
                    assert!((c[i * n + j].du - want.du).abs() < 1e-12);
                }
            }
        }
    }
}
