use serde::{Deserialize, Serialize};

use super::{axpy, dot, Objective, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmijoParams {
    pub c1: f64,
    pub factor: f64,
    pub max_halvings: usize,
    pub alpha0: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            factor: 0.5,
            max_halvings: 50,
            alpha0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    pub alpha0: f64,
    pub alpha_max: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 60,
            alpha0: 1.0,
            alpha_max: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LineSearch {
    Armijo(ArmijoParams),
    Wolfe(WolfeParams),
}

impl LineSearch {
    pub fn armijo() -> Self {
        LineSearch::Armijo(ArmijoParams::default())
    }

    pub fn wolfe() -> Self {
        LineSearch::Wolfe(WolfeParams::default())
    }

    pub fn search(&self, f: &dyn Objective, x: &[f64], d: &[f64], at_x: &Sample) -> Result<LineStep> {
        match self {
            LineSearch::Armijo(p) => armijo_goldstein_search(f, x, d, at_x, p),
            LineSearch::Wolfe(p) => wolfe_search(f, x, d, at_x, p),
        }
    }
}

/// Accepted step with the objective sampled at `x + alpha d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineStep {
    pub alpha: f64,
    pub sample: Sample,
    pub evals: usize,
}

/// Probe that maps a numeric failure at a trial point to an infinite loss,
/// so the search simply backs off.
fn probe(f: &dyn Objective, x: &[f64], alpha: f64, d: &[f64]) -> Result<Sample> {
    match f.value_grad(&axpy(x, alpha, d)) {
        Ok(s) if s.loss.is_finite() && s.grad.iter().all(|g| g.is_finite()) => Ok(s),
        Ok(s) => Ok(Sample {
            loss: f64::INFINITY,
            ..s
        }),
        Err(Error::NonFinite { .. }) => Ok(Sample {
            loss: f64::INFINITY,
            grad: vec![f64::NAN; x.len()],
            terms: Vec::new(),
        }),
        Err(e) => Err(e),
    }
}

fn descent_slope(g: &[f64], d: &[f64]) -> Result<f64> {
    let s = dot(g, d);
    if s < 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::LineSearch(format!("not a descent direction (gᵀd = {s:e})")))
    }
}

/// Backtracking from `alpha0` until `f(x + αd) ≤ f(x) + c1 α gᵀd`.
pub fn armijo_goldstein_search(
    f: &dyn Objective,
    x: &[f64],
    d: &[f64],
    at_x: &Sample,
    p: &ArmijoParams,
) -> Result<LineStep> {
    let slope = descent_slope(&at_x.grad, d)?;
    let mut alpha = p.alpha0;
    for k in 0..=p.max_halvings {
        let s = probe(f, x, alpha, d)?;
        if s.loss <= at_x.loss + p.c1 * alpha * slope {
            return Ok(LineStep {
                alpha,
                sample: s,
                evals: k + 1,
            });
        }
        alpha *= p.factor;
    }
    Err(Error::LineSearch(format!("no sufficient decrease after {} halvings", p.max_halvings)))
}

/// Minimizer of the cubic matching values and slopes at `a` and `b`,
/// safeguarded to the interior of the bracket.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    let margin = 0.01 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let t = if disc >= 0.0 && fa.is_finite() && fb.is_finite() {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    } else {
        f64::NAN
    };
    if t.is_finite() && t >= lo + margin && t <= hi - margin {
        t
    } else if t.is_finite() && t > lo && t < hi {
        t.clamp(lo + margin, hi - margin)
    } else {
        0.5 * (lo + hi)
    }
}

/// Step satisfying the strong Wolfe conditions, by bracketing and zooming
/// with cubic interpolation.
pub fn wolfe_search(f: &dyn Objective, x: &[f64], d: &[f64], at_x: &Sample, p: &WolfeParams) -> Result<LineStep> {
    let slope0 = descent_slope(&at_x.grad, d)?;
    let f0 = at_x.loss;
    let mut evals = 0;
    let armijo = |alpha: f64, v: f64| v <= f0 + p.c1 * alpha * slope0;
    let curvature = |s: f64| s.abs() <= -p.c2 * slope0;

    // (alpha, value, slope, sample)
    let mut prev = (0.0, f0, slope0, None::<Sample>);
    let mut alpha = p.alpha0;
    let (mut lo, mut hi);
    loop {
        let s = probe(f, x, alpha, d)?;
        evals += 1;
        let slope = if s.loss.is_finite() { dot(&s.grad, d) } else { f64::NAN };
        if !armijo(alpha, s.loss) || (evals > 1 && s.loss >= prev.1) || !slope.is_finite() {
            lo = prev;
            hi = (alpha, s.loss, slope, Some(s));
            break;
        }
        if curvature(slope) {
            return Ok(LineStep { alpha, sample: s, evals });
        }
        if slope >= 0.0 {
            lo = (alpha, s.loss, slope, Some(s));
            hi = prev;
            break;
        }
        if evals >= p.max_evals || alpha >= p.alpha_max {
            return Err(Error::LineSearch("strong Wolfe bracket not found".into()));
        }
        prev = (alpha, s.loss, slope, Some(s));
        alpha = (2.0 * alpha).min(p.alpha_max);
    }

    loop {
        if evals >= p.max_evals {
            return Err(Error::LineSearch(format!("strong Wolfe zoom failed after {evals} evaluations")));
        }
        let a = if hi.1.is_finite() && hi.2.is_finite() {
            cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            0.5 * (lo.0 + hi.0)
        };
        let s = probe(f, x, a, d)?;
        evals += 1;
        let slope = if s.loss.is_finite() { dot(&s.grad, d) } else { f64::NAN };
        if !armijo(a, s.loss) || s.loss >= lo.1 || !slope.is_finite() {
            hi = (a, s.loss, slope, Some(s));
        } else {
            if curvature(slope) {
                return Ok(LineStep { alpha: a, sample: s, evals });
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, s.loss, slope, Some(s));
        }
        if (hi.0 - lo.0).abs() <= f64::EPSILON * lo.0.abs().max(1e-300) {
            // the bracket collapsed: accept the best sufficient-decrease point
            if let (true, Some(sample)) = (lo.0 > 0.0, lo.3.take()) {
                return Ok(LineStep {
                    alpha: lo.0,
                    sample,
                    evals,
                });
            }
            return Err(Error::LineSearch("strong Wolfe bracket collapsed".into()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::FnObjective;

    fn parabola() -> FnObjective<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        FnObjective::new(1, |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]))
    }

    fn at(f: &dyn Objective, x: &[f64]) -> Sample {
        f.value_grad(x).unwrap()
    }

    #[test]
    fn armijo_accepts_the_newton_step() {
        let f = parabola();
        let s = at(&f, &[1.0]);
        let step = armijo_goldstein_search(&f, &[1.0], &[-1.0], &s, &ArmijoParams::default()).unwrap();
        assert_eq!(step.alpha, 1.0);
        assert_eq!(step.sample.loss, 0.0);
    }

    #[test]
    fn armijo_rejects_ascent() {
        let f = parabola();
        let s = at(&f, &[1.0]);
        assert!(matches!(
            armijo_goldstein_search(&f, &[1.0], &[1.0], &s, &ArmijoParams::default()),
            Err(Error::LineSearch(_))
        ));
    }

    #[test]
    fn armijo_satisfies_sufficient_decrease() {
        let f = FnObjective::new(2, |x: &[f64]| {
            (x[0].powi(4) + 3.0 * x[1] * x[1], vec![4.0 * x[0].powi(3), 6.0 * x[1]])
        });
        let x = [2.0, -1.5];
        let s = at(&f, &x);
        let d: Vec<f64> = s.grad.iter().map(|g| -g).collect();
        let p = ArmijoParams::default();
        let step = armijo_goldstein_search(&f, &x, &d, &s, &p).unwrap();
        assert!(step.sample.loss <= s.loss + p.c1 * step.alpha * dot(&s.grad, &d));
    }

    #[test]
    fn wolfe_accepts_the_newton_step() {
        let f = parabola();
        let s = at(&f, &[1.0]);
        let step = wolfe_search(&f, &[1.0], &[-1.0], &s, &WolfeParams::default()).unwrap();
        assert_eq!(step.alpha, 1.0);
    }

    #[test]
    fn wolfe_satisfies_the_curvature_condition() {
        let f = FnObjective::new(2, |x: &[f64]| {
            let v = (x[0] - 1.0).powi(2) * 10.0 + (x[0] * x[1]).sin() + x[1] * x[1];
            let g = vec![20.0 * (x[0] - 1.0) + x[1] * (x[0] * x[1]).cos(), x[0] * (x[0] * x[1]).cos() + 2.0 * x[1]];
            (v, g)
        });
        let p = WolfeParams::default();
        for x in [[3.0, 2.0], [-1.0, 0.5], [0.2, -4.0]] {
            let s = at(&f, &x);
            for scale in [1e-3, 1.0, 30.0] {
                let d: Vec<f64> = s.grad.iter().map(|g| -g * scale).collect();
                let step = wolfe_search(&f, &x, &d, &s, &p).unwrap();
                let slope0 = dot(&s.grad, &d);
                assert!(dot(&step.sample.grad, &d).abs() <= p.c2 * slope0.abs());
                assert!(step.sample.loss <= s.loss + p.c1 * step.alpha * slope0);
            }
        }
    }

    #[test]
    fn tight_wolfe_finds_the_exact_minimizer_of_a_quadratic() {
        let f = FnObjective::new(2, |x: &[f64]| (x[0] * x[0] + 10.0 * x[1] * x[1], vec![2.0 * x[0], 20.0 * x[1]]));
        let x = [1.0, 1.0];
        let s = at(&f, &x);
        let d = [-2.0, -20.0];
        let p = WolfeParams {
            c2: 1e-6,
            ..Default::default()
        };
        let step = wolfe_search(&f, &x, &d, &s, &p).unwrap();
        let exact = (4.0 + 400.0) / (2.0 * 4.0 + 20.0 * 400.0);
        assert!((step.alpha - exact).abs() < 1e-12);
    }

    #[test]
    fn non_finite_probes_back_off() {
        let f = FnObjective::new(1, |x: &[f64]| {
            if x[0] < -0.5 {
                (f64::NAN, vec![f64::NAN])
            } else {
                ((x[0] - 0.1).powi(2), vec![2.0 * (x[0] - 0.1)])
            }
        });
        let s = at(&f, &[1.0]);
        let step = armijo_goldstein_search(&f, &[1.0], &[-10.0], &s, &ArmijoParams::default()).unwrap();
        assert!(step.sample.loss.is_finite());
        let step = wolfe_search(&f, &[1.0], &[-10.0], &s, &WolfeParams::default()).unwrap();
        assert!(step.sample.loss < s.loss);
    }
}
