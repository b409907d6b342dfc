//! Scalar abstraction for pointwise residual operators.
//!
//! Residual operators are written once, generically over [`Scalar`]. They run
//! on `f64` for plain evaluation and on [`Dual`] to obtain the exact partial
//! derivatives of every residual with respect to the jet components (and
//! trainable physical parameters) they consume. Those partials seed the
//! reverse sweep through the networks.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Number of tangent directions carried by [`Dual`]: four output channels with
/// five jet components each, plus up to four trainable physical parameters.
pub const MAX_SEEDS: usize = 24;

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
}

/// First-order forward-mode number with [`MAX_SEEDS`] tangent components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; MAX_SEEDS],
}

impl Dual {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; MAX_SEEDS] }
    }

    #[inline]
    pub fn seeded(v: f64, slot: usize) -> Self {
        let mut d = [0.0; MAX_SEEDS];
        d[slot] = 1.0;
        Self { v, d }
    }
}

impl Scalar for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.v
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, o: Dual) -> Dual {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(o.d.iter()) {
            *a += b;
        }
        self
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, o: Dual) -> Dual {
        self.v -= o.v;
        for (a, b) in self.d.iter_mut().zip(o.d.iter()) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; MAX_SEEDS];
        for i in 0..MAX_SEEDS {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        // value path mirrors plain f64 division bit for bit
        let q = self.v / o.v;
        let mut d = [0.0; MAX_SEEDS];
        for i in 0..MAX_SEEDS {
            d[i] = (self.d[i] - q * o.d[i]) / o.v;
        }
        Dual { v: q, d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(mut self) -> Dual {
        self.v = -self.v;
        for a in self.d.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, o: f64) -> Dual {
        self.v += o;
        self
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, o: f64) -> Dual {
        self.v -= o;
        self
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(mut self, o: f64) -> Dual {
        self.v *= o;
        for a in self.d.iter_mut() {
            *a *= o;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let x = Dual::seeded(3.0, 0);
        let y = Dual::seeded(2.0, 1);
        let f = x * y + x * 2.0 - y / x;
        assert_eq!(f.v, 6.0 + 6.0 - 2.0 / 3.0);
        assert!((f.d[0] - (2.0 + 2.0 + 2.0 / 9.0)).abs() < 1e-15);
        assert!((f.d[1] - (3.0 - 1.0 / 3.0)).abs() < 1e-15);
        assert!(f.d[2..].iter().all(|&v| v == 0.0));
    }
}
