//! Truncated Taylor arithmetic for forward-mode differentiation.
//!
//! A `Jet<N>` holds the first `N` Taylor coefficients of a scalar function of
//! one variable around the evaluation point: `c[k] = f^(k)(t0) / k!`. Every
//! elementary operation propagates all coefficients exactly (up to rounding),
//! so composing the control laws out of jet operations yields analytic time
//! derivatives without finite differencing.
//!
//! `Jet<1>` is plain value arithmetic, `Jet<2>` is the classic dual number.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Value plus first derivative.
pub type Dual = Jet<2>;
/// Value plus first and second derivatives.
pub type Jet3 = Jet<3>;
/// Value plus derivatives up to order four.
pub type Jet5 = Jet<5>;

#[derive(Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    c: [f64; N],
}

impl<const N: usize> fmt::Debug for Jet<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Jet").field(&self.c).finish()
    }
}

impl<const N: usize> Default for Jet<N> {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl<const N: usize> From<f64> for Jet<N> {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

const FACTORIAL: [f64; 8] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];

fn factorial(k: usize) -> f64 {
    FACTORIAL
        .get(k)
        .copied()
        .unwrap_or_else(|| (1..=k).map(|i| i as f64).product())
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Self { c }
    }

    /// The independent variable `t0 + h`, seeded with unit slope.
    pub fn variable(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        if N > 1 {
            c[1] = 1.0;
        }
        Self { c }
    }

    pub fn from_coeffs(c: [f64; N]) -> Self {
        Self { c }
    }

    /// Builds a jet from derivative values `d[k] = f^(k)(t0)`.
    pub fn from_derivatives(d: [f64; N]) -> Self {
        let mut c = d;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck /= factorial(k);
        }
        Self { c }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64; N] {
        &self.c
    }

    #[inline]
    pub fn coeff(&self, k: usize) -> f64 {
        self.c[k]
    }

    /// `k`-th derivative with respect to the seeding variable.
    #[inline]
    pub fn derivative(&self, k: usize) -> f64 {
        self.c[k] * factorial(k)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Keeps the first `M` coefficients.
    pub fn truncate<const M: usize>(&self) -> Jet<M> {
        assert!(M <= N, "cannot widen a jet by truncation");
        let mut c = [0.0; M];
        c.copy_from_slice(&self.c[..M]);
        Jet { c }
    }

    /// Jet of the derivative. Needs `M < N`; the top coefficient of `self`
    /// is consumed.
    pub fn differentiate<const M: usize>(&self) -> Jet<M> {
        assert!(M < N, "differentiation loses one order");
        let mut c = [0.0; M];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = (k + 1) as f64 * self.c[k + 1];
        }
        Jet { c }
    }

    /// Evaluates the Taylor polynomial `sum taylor[k] h^k` where `h` is the
    /// nilpotent part of `self`. `taylor[k]` must be `g^(k)(self.value())/k!`
    /// for the outer function `g`.
    pub fn compose(&self, taylor: &[f64; N]) -> Self {
        let mut h = *self;
        h.c[0] = 0.0;
        let mut out = Self::constant(taylor[N - 1]);
        for k in (0..N - 1).rev() {
            out = out * h;
            out.c[0] += taylor[k];
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        for v in c.iter_mut() {
            *v *= s;
        }
        Self { c }
    }

    pub fn recip(&self) -> Self {
        Self::constant(1.0) / *self
    }

    pub fn square(&self) -> Self {
        *self * *self
    }

    pub fn exp(&self) -> Self {
        let mut e = [0.0; N];
        e[0] = self.c[0].exp();
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * e[k - j];
            }
            e[k] = acc / k as f64;
        }
        Self { c: e }
    }

    pub fn ln(&self) -> Self {
        let a0 = self.c[0];
        let mut l = [0.0; N];
        l[0] = a0.ln();
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * l[j] * self.c[k - j];
            }
            l[k] = (self.c[k] - acc / k as f64) / a0;
        }
        Self { c: l }
    }

    pub fn sqrt(&self) -> Self {
        let mut s = [0.0; N];
        s[0] = self.c[0].sqrt();
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..k {
                acc += s[j] * s[k - j];
            }
            s[k] = (self.c[k] - acc) / (2.0 * s[0]);
        }
        Self { c: s }
    }

    pub fn sin_cos(&self) -> (Self, Self) {
        let mut s = [0.0; N];
        let mut c = [0.0; N];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..N {
            let mut acc_s = 0.0;
            let mut acc_c = 0.0;
            for j in 1..=k {
                let ja = j as f64 * self.c[j];
                acc_s += ja * c[k - j];
                acc_c += ja * s[k - j];
            }
            s[k] = acc_s / k as f64;
            c[k] = -acc_c / k as f64;
        }
        (Self { c: s }, Self { c })
    }

    pub fn tan(&self) -> Self {
        let (s, c) = self.sin_cos();
        s / c
    }

    pub fn atan(&self) -> Self {
        let q = (Self::constant(1.0) + self.square()).recip();
        let mut y = [0.0; N];
        y[0] = self.c[0].atan();
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * q.c[k - j];
            }
            y[k] = acc / k as f64;
        }
        Self { c: y }
    }

    /// `sign(value) * self`, with `sign(0) = 0`.
    pub fn abs(&self) -> Self {
        self.scale(sign(self.c[0]))
    }
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        for k in 0..N {
            self.c[k] += rhs.c[k];
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        for k in 0..N {
            self.c[k] -= rhs.c[k];
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.c[j] * rhs.c[k - j];
            }
            c[k] = acc;
        }
        Self { c }
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let mut q = [0.0; N];
        let b0 = rhs.c[0];
        for k in 0..N {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc -= rhs.c[j] * q[k - j];
            }
            q[k] = acc / b0;
        }
        Self { c: q }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.c[0] += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.c[0] -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.scale(1.0 / rhs)
    }
}

impl<const N: usize> Add<Jet<N>> for f64 {
    type Output = Jet<N>;
    #[inline]
    fn add(self, rhs: Jet<N>) -> Jet<N> {
        rhs + self
    }
}

impl<const N: usize> Sub<Jet<N>> for f64 {
    type Output = Jet<N>;
    #[inline]
    fn sub(self, rhs: Jet<N>) -> Jet<N> {
        -rhs + self
    }
}

impl<const N: usize> Mul<Jet<N>> for f64 {
    type Output = Jet<N>;
    #[inline]
    fn mul(self, rhs: Jet<N>) -> Jet<N> {
        rhs.scale(self)
    }
}

impl<const N: usize> Div<Jet<N>> for f64 {
    type Output = Jet<N>;
    #[inline]
    fn div(self, rhs: Jet<N>) -> Jet<N> {
        Jet::constant(self) / rhs
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> SubAssign for Jet<N> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const N: usize> MulAssign for Jet<N> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

/// Two-component vector of jets; used for planar actuation quantities.
pub type JetVec2<const N: usize> = [Jet<N>; 2];

pub fn dot2<const N: usize>(a: &JetVec2<N>, b: &JetVec2<N>) -> Jet<N> {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm2<const N: usize>(a: &JetVec2<N>) -> Jet<N> {
    dot2(a, a).sqrt()
}

/// Counter-clockwise quarter turn, `S v` with `S = e2 e1^T - e1 e2^T`.
pub fn rot90<const N: usize>(a: &JetVec2<N>) -> JetVec2<N> {
    [-a[1], a[0]]
}
