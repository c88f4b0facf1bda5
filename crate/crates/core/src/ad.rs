//! Scalar abstraction used by every model equation.
//!
//! Model code is written once, generic over [`Real`]. Evaluating it with
//! `f64` gives plain values; evaluating it with [`HDual`] gives the value,
//! gradient and dense Hessian with respect to up to `N` seeded inputs in a
//! single forward pass.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn atan(self) -> Self;
    fn ln(self) -> Self;

    fn powi(self, n: i32) -> Self {
        let mut out = Self::cst(1.0);
        for _ in 0..n.unsigned_abs() {
            out = out * self;
        }
        if n < 0 {
            Self::cst(1.0) / out
        } else {
            out
        }
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Second-order forward-mode dual number over `N` inputs.
#[derive(Clone, Copy, Debug)]
pub struct HDual<const N: usize> {
    pub re: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> HDual<N> {
    pub fn constant(re: f64) -> Self {
        Self {
            re,
            grad: [0.0; N],
            hess: [[0.0; N]; N],
        }
    }

    /// Independent variable `i` with value `re`.
    pub fn var(re: f64, i: usize) -> Self {
        let mut d = Self::constant(re);
        d.grad[i] = 1.0;
        d
    }

    pub fn seed(values: &[f64; N]) -> [Self; N] {
        std::array::from_fn(|i| Self::var(values[i], i))
    }

    // f(a) given f, f', f''
    #[inline]
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..N {
            out.grad[i] = df * self.grad[i];
        }
        for i in 0..N {
            let gi = self.grad[i];
            for j in 0..=i {
                let v = df * self.hess[i][j] + d2f * gi * self.grad[j];
                out.hess[i][j] = v;
                out.hess[j][i] = v;
            }
        }
        out
    }
}

impl<const N: usize> Add for HDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.re += o.re;
        for i in 0..N {
            self.grad[i] += o.grad[i];
            for j in 0..N {
                self.hess[i][j] += o.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for HDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.re -= o.re;
        for i in 0..N {
            self.grad[i] -= o.grad[i];
            for j in 0..N {
                self.hess[i][j] -= o.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Neg for HDual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Mul for HDual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.re * o.re);
        for i in 0..N {
            out.grad[i] = self.re * o.grad[i] + o.re * self.grad[i];
        }
        for i in 0..N {
            for j in 0..=i {
                let v = self.re * o.hess[i][j]
                    + o.re * self.hess[i][j]
                    + self.grad[i] * o.grad[j]
                    + o.grad[i] * self.grad[j];
                out.hess[i][j] = v;
                out.hess[j][i] = v;
            }
        }
        out
    }
}

impl<const N: usize> Div for HDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.re;
        self * o.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl<const N: usize> Add<f64> for HDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.re += o;
        self
    }
}

impl<const N: usize> Sub<f64> for HDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.re -= o;
        self
    }
}

impl<const N: usize> Mul<f64> for HDual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.re *= o;
        for i in 0..N {
            self.grad[i] *= o;
            for j in 0..N {
                self.hess[i][j] *= o;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for HDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

impl<const N: usize> Real for HDual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.re))
    }
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(c, -s, -c)
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        let d = 1.0 - t * t;
        self.chain(t, d, -2.0 * t * d)
    }
    fn atan(self) -> Self {
        let x = self.re;
        let d = 1.0 / (1.0 + x * x);
        self.chain(x.atan(), d, -2.0 * x * d * d)
    }
    fn ln(self) -> Self {
        let x = self.re;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn powi(self, n: i32) -> Self {
        let x = self.re;
        let nf = n as f64;
        self.chain(
            x.powi(n),
            nf * x.powi(n - 1),
            nf * (nf - 1.0) * x.powi(n - 2),
        )
    }
}
