//! Full-batch optimizers: ADAM, dense BFGS and L-BFGS with Armijo or strong
//! Wolfe line searches, chained by a multi-phase [`Schedule`].

pub mod adam;
pub mod benchmarks;
pub mod bfgs;
pub mod lbfgs;
pub mod line_search;
pub mod schedule;

pub use adam::{adam_step, AdamState};
pub use bfgs::{bfgs_step, BfgsState};
pub use lbfgs::{lbfgs_step, LbfgsState};
pub use line_search::{armijo_goldstein_search, wolfe_search, ArmijoParams, LineSearch, LineStep, WolfeParams};
pub use schedule::{
    parse_history_csv, read_history_csv, run_schedule, HistoryRow, LineSearchKind, OptimizerKind, Outcome, Phase, RunRecord, Schedule,
};

use crate::error::Result;
use crate::loss::{evaluate, TrainingProblem};

/// Loss, gradient and per-term values at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub terms: Vec<f64>,
}

impl Sample {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.grad)
    }
}

/// Something to minimize. Every probe returns the gradient as well; line
/// searches reuse it at the accepted point.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value_grad(&self, x: &[f64]) -> Result<Sample>;
    fn term_names(&self) -> Vec<String> {
        Vec::new()
    }
}

impl Objective for TrainingProblem {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn value_grad(&self, x: &[f64]) -> Result<Sample> {
        let e = evaluate(self, x, true)?;
        Ok(Sample {
            loss: e.loss,
            grad: e.grad.expect("gradient requested"),
            terms: e.terms,
        })
    }

    fn term_names(&self) -> Vec<String> {
        TrainingProblem::term_names(self)
    }
}

/// Objective from a closure returning `(f, ∇f)`.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad(&self, x: &[f64]) -> Result<Sample> {
        let (loss, grad) = (self.f)(x);
        Ok(Sample {
            loss,
            grad,
            terms: Vec::new(),
        })
    }
}

/// Eight interleaved partial sums, so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `x + α d`
pub(crate) fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}
