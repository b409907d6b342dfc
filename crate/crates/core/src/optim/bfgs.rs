use rayon::prelude::*;

use super::{axpy, dot, norm, LineSearch, LineStep, Objective, Sample};
use crate::error::{Error, Result};

/// Largest θ for which a dense inverse Hessian is allowed.
pub const DENSE_LIMIT: usize = 20_000;

/// Dense inverse-Hessian approximation, `H₀ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsState {
    n: usize,
    h: Vec<f64>,
    /// `(g, H g)` for the current `H`, saving one pass over `H` per step.
    cached: Option<(Vec<f64>, Vec<f64>)>,
    pub iter: usize,
    pub resets: usize,
    pub skipped: usize,
}

/// What one quasi-Newton iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    pub evals: usize,
    /// The gradient was exactly zero and nothing moved.
    pub stationary: bool,
    /// A curvature pair was accepted.
    pub updated: bool,
}

impl BfgsState {
    pub fn new(n: usize) -> Result<Self> {
        if n > DENSE_LIMIT {
            return Err(Error::contract(format!(
                "dense BFGS refused for {n} parameters (limit {DENSE_LIMIT}); use L-BFGS"
            )));
        }
        let mut s = Self {
            n,
            h: vec![0.0; n * n],
            cached: None,
            iter: 0,
            resets: 0,
            skipped: 0,
        };
        s.set_identity();
        Ok(s)
    }

    fn set_identity(&mut self) {
        self.cached = None;
        self.h.fill(0.0);
        for i in 0..self.n {
            self.h[i * self.n + i] = 1.0;
        }
    }

    pub fn reset(&mut self) {
        self.set_identity();
        self.resets += 1;
    }

    /// Row-major inverse-Hessian approximation.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        if n >= 256 {
            self.h.par_chunks(n).map(|row| dot(row, v)).collect()
        } else {
            self.h.chunks(n).map(|row| dot(row, v)).collect()
        }
    }

    /// Symmetric rank-two update; skipped when `sᵀy ≤ 1e-12 ‖s‖‖y‖`.
    pub fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        let hy = self.apply(y);
        self.cached = None;
        self.update_with(s, y, &hy).is_some()
    }

    /// The update given `H y`; returns `(ρ, c)` of the applied correction
    /// `H += c s sᵀ − ρ (s (Hy)ᵀ + Hy sᵀ)`.
    fn update_with(&mut self, s: &[f64], y: &[f64], hy: &[f64]) -> Option<(f64, f64)> {
        let sy = dot(s, y);
        if !(sy > 1e-12 * norm(s) * norm(y)) {
            self.skipped += 1;
            return None;
        }
        let rho = 1.0 / sy;
        let yhy = dot(y, hy);
        let c = rho * rho * yhy + rho;
        let n = self.n;
        // written so that entries (i, j) and (j, i) round identically
        let row = |i: usize, r: &mut [f64]| {
            let (si, hi) = (s[i], hy[i]);
            for ((h, &sj), &hj) in r.iter_mut().zip(s).zip(hy) {
                *h += c * (si * sj) - rho * (si * hj + hi * sj);
            }
        };
        if n >= 256 {
            self.h.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
        } else {
            self.h.chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
        }
        Some((rho, c))
    }

    fn times_gradient(&mut self, g: &[f64]) -> Vec<f64> {
        match self.cached.take() {
            Some((cg, hg)) if cg == g => hg,
            _ => self.apply(g),
        }
    }
}

/// Line search along `d`; when it fails (or `d` is not a descent direction)
/// the memory is reset and steepest descent is tried once more.
pub(crate) fn search_or_reset(
    f: &dyn Objective,
    ls: &LineSearch,
    theta: &[f64],
    current: &Sample,
    d: Vec<f64>,
    mut reset: impl FnMut(),
) -> Result<(LineStep, Vec<f64>)> {
    if dot(&d, &current.grad) < 0.0 {
        if let Ok(step) = ls.search(f, theta, &d, current) {
            return Ok((step, d));
        }
    }
    reset();
    let d: Vec<f64> = current.grad.iter().map(|g| -g).collect();
    let step = ls.search(f, theta, &d, current)?;
    Ok((step, d))
}

/// One BFGS iteration: `d = −H g`, line search, inverse update.
pub fn bfgs_step(
    state: &mut BfgsState,
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
    let hg = state.times_gradient(&current.grad);
    let resets = state.resets;
    let d: Vec<f64> = hg.iter().map(|v| -v).collect();
    let (step, d) = search_or_reset(f, ls, theta, current, d, || state.reset())?;
    // after a reset H = I and H g is g itself
    let hg = if state.resets != resets { current.grad.clone() } else { hg };
    let g = &step.sample.grad;
    let s: Vec<f64> = d.iter().map(|v| step.alpha * v).collect();
    let y: Vec<f64> = g.iter().zip(&current.grad).map(|(a, b)| a - b).collect();
    let mut hg_new = state.apply(g);
    let hy: Vec<f64> = hg_new.iter().zip(&hg).map(|(a, b)| a - b).collect();
    let correction = state.update_with(&s, &y, &hy);
    if let Some((rho, c)) = correction {
        let (sg, hyg) = (dot(&s, g), dot(&hy, g));
        for ((h, si), hi) in hg_new.iter_mut().zip(&s).zip(&hy) {
            *h += c * si * sg - rho * (si * hyg + hi * sg);
        }
    }
    state.cached = Some((g.clone(), hg_new));
    let updated = correction.is_some();
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
