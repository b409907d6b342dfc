//! Classic test functions for the optimizers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Objective, Sample};
use crate::error::Result;

/// Extended Rosenbrock function (chained form), minimum 0 at (1, ..., 1).
#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock {
    pub dim: usize,
}

pub fn rosenbrock(dim: usize) -> Rosenbrock {
    Rosenbrock { dim }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad(&self, x: &[f64]) -> Result<Sample> {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Ok(Sample {
            loss: f,
            grad: g,
            terms: Vec::new(),
        })
    }
}

/// `½ (x − x*)ᵀ A (x − x*)` with `A = Q Λ Qᵀ` for a seeded random rotation `Q`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    n: usize,
    a: Vec<f64>,
    xstar: Vec<f64>,
}

/// Rotated quadratic with the given eigenvalues; the minimizer is drawn
/// uniformly in `[-1, 1]ⁿ`. Seed 0 with identity-free rotation is still random.
pub fn quadratic(eigenvalues: &[f64], seed: u64) -> Quadratic {
    let n = eigenvalues.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Gram-Schmidt on a random matrix gives the rotation.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for u in &q {
                let c: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * ui);
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-8 {
            q.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    let mut a = vec![0.0; n * n];
    for (k, u) in q.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] += eigenvalues[k] * u[i] * u[j];
            }
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let xstar = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Quadratic { n, a, xstar }
}

impl Quadratic {
    pub fn minimizer(&self) -> &[f64] {
        &self.xstar
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.n
    }

    fn value_grad(&self, x: &[f64]) -> Result<Sample> {
        let e: Vec<f64> = x.iter().zip(&self.xstar).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = self.a.chunks(self.n).map(|row| row.iter().zip(&e).map(|(a, b)| a * b).sum()).collect();
        let f = 0.5 * e.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        Ok(Sample {
            loss: f,
            grad: g,
            terms: Vec::new(),
        })
    }
}

/// `Σ x_i²`
pub fn sphere(dim: usize) -> Quadratic {
    Quadratic {
        n: dim,
        a: (0..dim * dim).map(|k| if k % (dim + 1) == 0 { 2.0 } else { 0.0 }).collect(),
        xstar: vec![0.0; dim],
    }
}

/// Eigenvalues spread geometrically from 1 to `kappa`.
pub fn log_spectrum(n: usize, kappa: f64) -> Vec<f64> {
    (0..n).map(|i| kappa.powf(i as f64 / (n - 1).max(1) as f64)).collect()
}
