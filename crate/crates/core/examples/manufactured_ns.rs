//! Forward solve of a forced Navier-Stokes/energy system with a known
//! divergence-free solution, then the fine-grid error table.

use std::time::Instant;

use pinn_forge::autodiff::DifferentiableField;
use pinn_forge::cases::{build_forced_ns, ForcedNsConfig};
use pinn_forge::eval::{forced_ns_layout, grid_metrics, Reference};
use pinn_forge::optim::run_schedule;

fn main() -> pinn_forge::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = ForcedNsConfig::default();
    let case = build_forced_ns(&cfg, seed)?;
    let problem = &case.problem;
    let start = Instant::now();
    let record = run_schedule(
        problem,
        problem.initial_theta(seed).0,
        &ForcedNsConfig::default_schedule(),
        seed,
        "example",
        &mut |r| {
            if r.iter % 500 == 0 {
                println!("{:>5} {:<5} loss {:.3e}  {:.0}s", r.iter, r.phase, r.loss, start.elapsed().as_secs_f64());
            }
        },
    )?;
    let net = problem.network_field(&record.theta, 0)?;
    let truth = ForcedNsConfig::reference();
    let fields: [&dyn DifferentiableField; 1] = [&net];
    let report = grid_metrics(
        "manufactured:forced_ns",
        problem,
        &fields,
        &[],
        &forced_ns_layout(),
        100,
        100,
        &[("fluid", Reference::Analytic(&truth))],
        "analytic",
    )?;
    println!("{}", report.table());
    Ok(())
}
