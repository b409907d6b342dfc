//! Jets: a value bundled with its first and diagonal second derivatives.
//!
//! Cross derivatives (∂²/∂x∂y) are not carried. None of the residuals in this
//! crate needs them.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;

/// Value, gradient and diagonal of the Hessian of one output channel with
/// respect to the field inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub diag2: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        Self {
            value,
            grad: vec![0.0; dim],
            diag2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Directional derivative along `n` (the normal derivative for a unit normal).
    pub fn directional(&self, n: &[f64]) -> f64 {
        self.grad.iter().zip(n).map(|(g, c)| g * c).sum()
    }

    pub fn laplacian(&self, dims: usize) -> f64 {
        self.diag2[..dims].iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|v| v.is_finite()) && self.diag2.iter().all(|v| v.is_finite())
    }

    /// The planar (x, y) view used by residual operators.
    pub fn spatial(&self) -> SpatialJet<f64> {
        let g = |k: usize| self.grad.get(k).copied().unwrap_or(0.0);
        let h = |k: usize| self.diag2.get(k).copied().unwrap_or(0.0);
        SpatialJet {
            v: self.value,
            dx: g(0),
            dy: g(1),
            dxx: h(0),
            dyy: h(1),
        }
    }
}

/// Planar jet over a generic scalar: value, ∂/∂x, ∂/∂y, ∂²/∂x², ∂²/∂y².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialJet<S> {
    pub v: S,
    pub dx: S,
    pub dy: S,
    pub dxx: S,
    pub dyy: S,
}

impl<S: Scalar> SpatialJet<S> {
    pub fn constant(v: f64) -> Self {
        let z = S::cst(0.0);
        Self {
            v: S::cst(v),
            dx: z,
            dy: z,
            dxx: z,
            dyy: z,
        }
    }

    #[inline]
    pub fn laplacian(&self) -> S {
        self.dxx + self.dyy
    }

    #[inline]
    pub fn normal(&self, n: [f64; 2]) -> S {
        self.dx * n[0] + self.dy * n[1]
    }
}

/// Forward-mode second-order jet over `D` independent inputs.
///
/// Every direction is an independent univariate Taylor polynomial truncated at
/// second order, so products and compositions propagate the diagonal second
/// derivatives exactly. Used to write analytic fields with exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorJet<const D: usize> {
    pub v: f64,
    pub d: [f64; D],
    pub dd: [f64; D],
}

impl<const D: usize> TaylorJet<D> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; D], dd: [0.0; D] }
    }

    /// The `k`-th coordinate at value `v`.
    pub fn variable(v: f64, k: usize) -> Self {
        let mut j = Self::constant(v);
        j.d[k] = 1.0;
        j
    }

    /// Seeds all `D` coordinates of a point.
    pub fn point(x: &[f64]) -> [Self; D] {
        std::array::from_fn(|k| Self::variable(x[k], k))
    }

    /// Applies a scalar function given its value and first two derivatives.
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for k in 0..D {
            out.d[k] = f1 * self.d[k];
            out.dd[k] = f2 * self.d[k] * self.d[k] + f1 * self.dd[k];
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let d1 = 1.0 - t * t;
        self.chain(t, d1, -2.0 * t * d1)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        self.chain(
            self.v.powi(n),
            nf * self.v.powi(n - 1),
            nf * (nf - 1.0) * self.v.powi(n - 2),
        )
    }

    pub fn to_jet2(self) -> Jet2 {
        Jet2 {
            value: self.v,
            grad: self.d.to_vec(),
            diag2: self.dd.to_vec(),
        }
    }
}

impl<const D: usize> Add for TaylorJet<D> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for k in 0..D {
            self.d[k] += o.d[k];
            self.dd[k] += o.dd[k];
        }
        self
    }
}

impl<const D: usize> Sub for TaylorJet<D> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const D: usize> Neg for TaylorJet<D> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for k in 0..D {
            self.d[k] = -self.d[k];
            self.dd[k] = -self.dd[k];
        }
        self
    }
}

impl<const D: usize> Mul for TaylorJet<D> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for k in 0..D {
            out.d[k] = self.d[k] * o.v + self.v * o.d[k];
            out.dd[k] = self.dd[k] * o.v + 2.0 * self.d[k] * o.d[k] + self.v * o.dd[k];
        }
        out
    }
}

impl<const D: usize> Div for TaylorJet<D> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = o.chain(1.0 / o.v, -1.0 / (o.v * o.v), 2.0 / (o.v * o.v * o.v));
        self * inv
    }
}

impl<const D: usize> Add<f64> for TaylorJet<D> {
    type Output = Self;
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const D: usize> Sub<f64> for TaylorJet<D> {
    type Output = Self;
    fn sub(mut self, o: f64) -> Self {
        self.v -= o;
        self
    }
}

impl<const D: usize> Mul<f64> for TaylorJet<D> {
    type Output = Self;
    fn mul(mut self, o: f64) -> Self {
        self.v *= o;
        for k in 0..D {
            self.d[k] *= o;
            self.dd[k] *= o;
        }
        self
    }
}

impl<const D: usize> Mul<TaylorJet<D>> for f64 {
    type Output = TaylorJet<D>;
    fn mul(self, o: TaylorJet<D>) -> TaylorJet<D> {
        o * self
    }
}

impl<const D: usize> Add<TaylorJet<D>> for f64 {
    type Output = TaylorJet<D>;
    fn add(self, o: TaylorJet<D>) -> TaylorJet<D> {
        o + self
    }
}

impl<const D: usize> Sub<TaylorJet<D>> for f64 {
    type Output = TaylorJet<D>;
    fn sub(self, o: TaylorJet<D>) -> TaylorJet<D> {
        (-o) + self
    }
}
