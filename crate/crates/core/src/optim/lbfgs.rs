use std::collections::VecDeque;

use super::bfgs::{search_or_reset, StepInfo};
use super::{axpy, dot, norm, LineSearch, Objective, Sample};
use crate::error::Result;

/// Limited-memory inverse-Hessian approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsState {
    pub memory: usize,
    /// Scale the initial matrix by `sᵀy / yᵀy` of the newest pair.
    pub scaling: bool,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    pub iter: usize,
    pub resets: usize,
    pub skipped: usize,
}

impl LbfgsState {
    pub fn new(memory: usize) -> Self {
        Self {
            memory: memory.max(1),
            scaling: true,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
            iter: 0,
            resets: 0,
            skipped: 0,
        }
    }

    pub fn without_scaling(mut self) -> Self {
        self.scaling = false;
        self
    }

    pub fn pairs(&self) -> usize {
        self.s.len()
    }

    pub fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
        self.resets += 1;
    }

    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            self.skipped += 1;
            return false;
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        self.rho.push_back(1.0 / sy);
        true
    }

    /// `H g` by the two-loop recursion.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut a = vec![0.0; k];
        for i in (0..k).rev() {
            a[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= a[i] * yj;
            }
        }
        if self.scaling && k > 0 {
            let (s, y) = (&self.s[k - 1], &self.y[k - 1]);
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let b = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (a[i] - b) * sj;
            }
        }
        q
    }
}

/// One L-BFGS iteration with the same line-search fallback as BFGS.
pub fn lbfgs_step(
    state: &mut LbfgsState,
    theta: &mut Vec<f64>,
    current: &mut Sample,
    f: &dyn Objective,
    ls: &LineSearch,
) -> Result<StepInfo> {
    if current.grad.iter().all(|&g| g == 0.0) {
        return Ok(StepInfo {
            alpha: 0.0,
            evals: 0,
            stationary: true,
            updated: false,
        });
    }
    let d: Vec<f64> = state.apply(&current.grad).into_iter().map(|v| -v).collect();
    let (step, d) = search_or_reset(f, ls, theta, current, d, || state.reset())?;
    let s: Vec<f64> = d.iter().map(|v| step.alpha * v).collect();
    let y: Vec<f64> = step.sample.grad.iter().zip(&current.grad).map(|(a, b)| a - b).collect();
    let updated = state.push(s, y);
    *theta = axpy(theta, step.alpha, &d);
    *current = step.sample;
    state.iter += 1;
    Ok(StepInfo {
        alpha: step.alpha,
        evals: step.evals,
        stationary: false,
        updated,
    })
}
