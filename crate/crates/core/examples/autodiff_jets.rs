//! Input jets of a small network and the parameter gradient of a PDE loss,
//! both compared with central differences.

use pinn_forge::autodiff::{evaluate_jet, loss_gradient, NetworkField};
use pinn_forge::cases::{build_poisson_gamma, PoissonConfig};
use pinn_forge::loss::total_loss;
use pinn_forge::network::{init_params, Activation, MlpSpec};

fn main() -> pinn_forge::Result<()> {
    let spec = MlpSpec::with_hidden(2, &[16, 16], 1, Activation::Tanh)?;
    let field = NetworkField::plain(spec.clone(), init_params(&spec, 1))?;
    let x = [0.3, -0.4];
    let jet = &evaluate_jet(&field, &x)?[0];
    println!("u = {:.6}", jet.value);
    for k in 0..2 {
        let at = |h: f64| {
            let mut y = x;
            y[k] += h;
            field.forward(&y).map(|o| o[0])
        };
        let d1 = (at(1e-5)? - at(-1e-5)?) / 2e-5;
        let d2 = (at(1e-3)? - 2.0 * at(0.0)? + at(-1e-3)?) / 1e-6;
        println!("d/dx{k}   jet {:+.9e}  fd {d1:+.9e}", jet.grad[k]);
        println!("d2/dx{k}2 jet {:+.9e}  fd {d2:+.9e}", jet.diag2[k]);
    }

    // The Poisson loss mixes Laplacians, boundary values and a trainable
    // coefficient; its reverse gradient runs through the jets above.
    let case = build_poisson_gamma(&PoissonConfig::default(), 0)?;
    let p = &case.problem;
    let theta = p.initial_theta(3);
    let (loss, g) = loss_gradient(p, &theta)?;
    println!("loss {loss:.6e} over {} parameters", g.len());
    let mut picks = vec![0, 17, g.len() / 2];
    picks.extend(p.extras_range());
    for i in picks {
        let h = 1e-6;
        let mut a = theta.0.clone();
        let mut b = theta.0.clone();
        a[i] += h;
        b[i] -= h;
        let fd = (total_loss(p, &a)? - total_loss(p, &b)?) / (2.0 * h);
        println!("dL/dθ[{i}] reverse {:+.9e}  fd {fd:+.9e}", g.0[i]);
    }
    Ok(())
}
