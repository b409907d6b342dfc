//! Every optimizer on the standard benchmarks: Rosenbrock in 2 and 10
//! dimensions and a quadratic with condition number 1e4.

use pinn_forge::optim::benchmarks::{log_spectrum, quadratic, rosenbrock};
use pinn_forge::optim::{adam_step, bfgs_step, lbfgs_step, AdamState, BfgsState, LbfgsState, LineSearch, Objective};

const GTOL: f64 = 1e-6;

fn quasi_newton(f: &dyn Objective, x0: &[f64], dense: bool, ls: &LineSearch) -> pinn_forge::Result<(f64, f64, usize)> {
    let mut x = x0.to_vec();
    let mut cur = f.value_grad(&x)?;
    let mut it = 0;
    let mut bfgs = BfgsState::new(x.len())?;
    let mut lbfgs = LbfgsState::new(10);
    while cur.grad_norm() >= GTOL && it < 5000 {
        if dense {
            bfgs_step(&mut bfgs, &mut x, &mut cur, f, ls)?;
        } else {
            lbfgs_step(&mut lbfgs, &mut x, &mut cur, f, ls)?;
        }
        it += 1;
    }
    Ok((cur.loss, cur.grad_norm(), it))
}

fn adam(f: &dyn Objective, x0: &[f64], epochs: usize, lr: f64) -> pinn_forge::Result<(f64, f64, usize)> {
    let mut x = x0.to_vec();
    let mut st = AdamState::new(x.len(), lr);
    for _ in 0..epochs {
        let s = f.value_grad(&x)?;
        adam_step(&mut st, &mut x, &s.grad)?;
    }
    let s = f.value_grad(&x)?;
    Ok((s.loss, s.grad_norm(), epochs))
}

fn main() -> pinn_forge::Result<()> {
    let start = |n: usize| (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect::<Vec<f64>>();
    let problems: Vec<(&str, Box<dyn Objective>, Vec<f64>)> = vec![
        ("rosenbrock-2", Box::new(rosenbrock(2)), start(2)),
        ("rosenbrock-10", Box::new(rosenbrock(10)), start(10)),
        ("quadratic κ=1e4", Box::new(quadratic(&log_spectrum(20, 1e4), 7)), vec![0.0; 20]),
    ];
    println!("{:<16} {:<14} {:>12} {:>10} {:>6}", "problem", "optimizer", "f", "‖g‖", "iters");
    for (name, f, x0) in &problems {
        let runs = [
            ("adam 1e-3", adam(f.as_ref(), x0, 20_000, 1e-3)?),
            ("bfgs-armijo", quasi_newton(f.as_ref(), x0, true, &LineSearch::armijo())?),
            ("bfgs-wolfe", quasi_newton(f.as_ref(), x0, true, &LineSearch::wolfe())?),
            ("lbfgs-armijo", quasi_newton(f.as_ref(), x0, false, &LineSearch::armijo())?),
            ("lbfgs-wolfe", quasi_newton(f.as_ref(), x0, false, &LineSearch::wolfe())?),
        ];
        for (opt, (v, g, it)) in runs {
            println!("{name:<16} {opt:<14} {v:>12.3e} {g:>10.2e} {it:>6}");
        }
    }
    Ok(())
}
