//! Forward-mode scalars: plain `f64`, first-order `Dual<N>` and second-order `Jet<N>`.
//!
//! All invariant and potential evaluators are generic over [`Scalar`], so the same
//! code yields values, exact gradients or exact Hessians.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Highest derivative order carried (0, 1 or 2).
    const ORDER: u8;

    fn cst(c: f64) -> Self;
    fn value(&self) -> f64;

    /// Apply an outer function known through its value, gradient and row-major Hessian
    /// at `args`' values. Chain rule up to `ORDER`.
    fn lift(value: f64, grad: &[f64], hess: &[f64], args: &[Self]) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn sq(self) -> Self {
        self * self
    }

    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
}

impl Scalar for f64 {
    const ORDER: u8 = 0;

    fn cst(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn lift(value: f64, _grad: &[f64], _hess: &[f64], _args: &[Self]) -> Self {
        value
    }
}

/// Value plus gradient with respect to `N` seeded directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; N] }
    }

    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Dual { v, d }
    }

    pub fn seed(values: [f64; N]) -> [Self; N] {
        let mut out = [Self::constant(0.0); N];
        for i in 0..N {
            out[i] = Self::variable(values[i], i);
        }
        out
    }
}

impl<const N: usize> Scalar for Dual<N> {
    const ORDER: u8 = 1;

    fn cst(c: f64) -> Self {
        Self::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn lift(value: f64, grad: &[f64], _hess: &[f64], args: &[Self]) -> Self {
        let mut d = [0.0; N];
        for (g, a) in grad.iter().zip(args) {
            if *g != 0.0 {
                for k in 0..N {
                    d[k] += g * a.d[k];
                }
            }
        }
        Dual { v: value, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for k in 0..N {
            self.d[k] += o.d[k];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for k in 0..N {
            self.d[k] -= o.d[k];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = (self.d[k] - v * o.d[k]) * inv;
        }
        Dual { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for k in 0..N {
            self.d[k] = -self.d[k];
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for k in 0..N {
            self.d[k] *= c;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

/// Value, gradient and Hessian with respect to `N` seeded directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; N], h: [[0.0; N]; N] }
    }

    pub fn variable(v: f64, i: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    pub fn seed(values: [f64; N]) -> [Self; N] {
        let mut out = [Self::constant(0.0); N];
        for i in 0..N {
            out[i] = Self::variable(values[i], i);
        }
        out
    }
}

impl<const N: usize> Scalar for Jet<N> {
    const ORDER: u8 = 2;

    fn cst(c: f64) -> Self {
        Self::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn lift(value: f64, grad: &[f64], hess: &[f64], args: &[Self]) -> Self {
        let n = args.len();
        let mut out = Self::constant(value);
        for (i, a) in args.iter().enumerate() {
            let gi = grad[i];
            if gi != 0.0 {
                for p in 0..N {
                    out.g[p] += gi * a.g[p];
                    for q in 0..N {
                        out.h[p][q] += gi * a.h[p][q];
                    }
                }
            }
            for (j, b) in args.iter().enumerate() {
                let hij = hess[i * n + j];
                if hij != 0.0 {
                    for p in 0..N {
                        let s = hij * a.g[p];
                        if s != 0.0 {
                            for q in 0..N {
                                out.h[p][q] += s * b.g[q];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for p in 0..N {
            self.g[p] += o.g[p];
            for q in 0..N {
                self.h[p][q] += o.h[p][q];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::constant(self.v * o.v);
        for p in 0..N {
            r.g[p] = self.g[p] * o.v + self.v * o.g[p];
            for q in 0..N {
                r.h[p][q] = self.h[p][q] * o.v
                    + self.v * o.h[p][q]
                    + self.g[p] * o.g[q]
                    + self.g[q] * o.g[p];
            }
        }
        r
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // 1/x: first derivative -1/x^2, second 2/x^3
        let inv = 1.0 / o.v;
        let r = Self::lift(inv, &[-inv * inv], &[2.0 * inv * inv * inv], &[o]);
        self * r
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for p in 0..N {
            self.g[p] *= c;
            for q in 0..N {
                self.h[p][q] *= c;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

macro_rules! assign_ops {
    ($t:ident) => {
        impl<const N: usize> AddAssign for $t<N> {
            fn add_assign(&mut self, o: Self) {
                *self = *self + o;
            }
        }
        impl<const N: usize> SubAssign for $t<N> {
            fn sub_assign(&mut self, o: Self) {
                *self = *self - o;
            }
        }
        impl<const N: usize> MulAssign for $t<N> {
            fn mul_assign(&mut self, o: Self) {
                *self = *self * o;
            }
        }
    };
}

assign_ops!(Dual);
assign_ops!(Jet);

/// Gradient of `f` at `x` by forward mode.
pub fn gradient<const N: usize>(f: impl Fn(&[Dual<N>; N]) -> Dual<N>, x: [f64; N]) -> (f64, [f64; N]) {
    let r = f(&Dual::seed(x));
    (r.v, r.d)
}

/// Value, gradient and Hessian of `f` at `x`.
pub fn hessian<const N: usize>(
    f: impl Fn(&[Jet<N>; N]) -> Jet<N>,
    x: [f64; N],
) -> (f64, [f64; N], [[f64; N]; N]) {
    let r = f(&Jet::seed(x));
    (r.v, r.g, r.h)
}
