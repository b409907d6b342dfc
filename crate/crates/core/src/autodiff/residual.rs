//! Pointwise operators: anything that turns the jets of a few field channels
//! at one point into a small vector of residuals.

use super::engine::Order;
use super::jet::SpatialJet;
use super::scalar::{Dual, Scalar};

/// Per-point context handed to operators.
#[derive(Debug, Clone, Copy)]
pub struct PointCtx<'a> {
    /// Index of the point inside its sampling set.
    pub index: usize,
    /// Full input tuple (spatial coordinates first, then any parametric inputs).
    pub point: &'a [f64],
    /// Outward unit normal stored with boundary samplings.
    pub normal: Option<[f64; 2]>,
}

impl PointCtx<'_> {
    pub fn normal_or_panic(&self) -> [f64; 2] {
        self.normal
            .expect("operator needs a normal but the sampling set carries none")
    }
}

/// A pointwise residual, generic over the scalar type.
pub trait PointwiseOp: Send + Sync {
    /// Highest input-derivative order read from the field jets.
    fn order(&self) -> Order;
    /// Number of field channels consumed, in binding order.
    fn n_fields(&self) -> usize;
    /// Number of trainable scalars consumed.
    fn n_extras(&self) -> usize {
        0
    }
    fn n_equations(&self) -> usize;
    fn equation_names(&self) -> Vec<String> {
        (0..self.n_equations()).map(|i| format!("r{i}")).collect()
    }
    fn eval<S: Scalar>(&self, ctx: &PointCtx, fields: &[SpatialJet<S>], extras: &[S], out: &mut [S]);
}

/// Object-safe face of [`PointwiseOp`].
pub trait DynOp: Send + Sync {
    fn order(&self) -> Order;
    fn n_fields(&self) -> usize;
    fn n_extras(&self) -> usize;
    fn n_equations(&self) -> usize;
    fn equation_names(&self) -> Vec<String>;
    fn eval_f64(&self, ctx: &PointCtx, fields: &[SpatialJet<f64>], extras: &[f64], out: &mut [f64]);
    fn eval_dual(&self, ctx: &PointCtx, fields: &[SpatialJet<Dual>], extras: &[Dual], out: &mut [Dual]);
}

impl<T: PointwiseOp> DynOp for T {
    fn order(&self) -> Order {
        PointwiseOp::order(self)
    }
    fn n_fields(&self) -> usize {
        PointwiseOp::n_fields(self)
    }
    fn n_extras(&self) -> usize {
        PointwiseOp::n_extras(self)
    }
    fn n_equations(&self) -> usize {
        PointwiseOp::n_equations(self)
    }
    fn equation_names(&self) -> Vec<String> {
        PointwiseOp::equation_names(self)
    }
    fn eval_f64(&self, ctx: &PointCtx, fields: &[SpatialJet<f64>], extras: &[f64], out: &mut [f64]) {
        self.eval(ctx, fields, extras, out)
    }
    fn eval_dual(&self, ctx: &PointCtx, fields: &[SpatialJet<Dual>], extras: &[Dual], out: &mut [Dual]) {
        self.eval(ctx, fields, extras, out)
    }
}
