//! Recovers an unknown diffusion coefficient from twenty interior
//! observations of a forced Poisson problem.

use pinn_forge::cases::{build_poisson_gamma, PoissonConfig};
use pinn_forge::optim::run_schedule;

fn main() -> pinn_forge::Result<()> {
    let cfg = PoissonConfig::default();
    let case = build_poisson_gamma(&cfg, 0)?;
    let p = &case.problem;
    let gamma = p.extras_range().start;
    let record = run_schedule(p, p.initial_theta(0).0, &PoissonConfig::default_schedule(), 0, "example", &mut |r| {
        if r.iter % 250 == 0 {
            println!("{:>5} {:<5} loss {:.3e}", r.iter, r.phase, r.loss);
        }
    })?;
    let g = record.theta[gamma];
    println!("gamma = {g:.6} (true {}, relative error {:.2e})", cfg.gamma_true, (g - cfg.gamma_true).abs() / cfg.gamma_true);
    Ok(())
}
