//! Two networks coupled through an interface: the conjugate channel/solid
//! case, or with `--two-slab` the conduction-only variant whose interface
//! temperature is known in closed form.

use std::time::Instant;

use clap::Parser;
use pinn_forge::autodiff::DifferentiableField;
use pinn_forge::cases::{build_conjugate_heat, ConjugateConfig};
use pinn_forge::eval::{conjugate_layout, grid_metrics};
use pinn_forge::optim::{run_schedule, LineSearchKind, Phase, Schedule};

#[derive(Parser)]
struct Args {
    #[arg(long)]
    two_slab: bool,
    #[arg(long, default_value_t = 5000)]
    adam: usize,
    #[arg(long, default_value_t = 500)]
    bfgs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra fluid collocation points around the interface corner.
    #[arg(long, default_value_t = 0)]
    corner: usize,
    #[arg(long)]
    interface: Option<usize>,
}

fn main() -> pinn_forge::Result<()> {
    let a = Args::parse();
    let mut cfg = if a.two_slab { ConjugateConfig::two_slab() } else { ConjugateConfig::default() };
    cfg.corner_points = a.corner;
    if let Some(n) = a.interface {
        cfg.n_interface = n;
    }
    let case = build_conjugate_heat(&cfg, a.seed)?;
    let p = &case.problem;
    let schedule = Schedule::new(vec![Phase::adam(a.adam, 1e-3), Phase::bfgs(a.bfgs, LineSearchKind::Armijo)])?;
    let start = Instant::now();
    let record = run_schedule(p, p.initial_theta(a.seed).0, &schedule, a.seed, "example", &mut |r| {
        if r.iter % 500 == 0 {
            println!("{:>5} {:<5} loss {:.3e}  {:.0}s", r.iter, r.phase, r.loss, start.elapsed().as_secs_f64());
        }
    })?;
    for (name, v) in record.term_names.iter().zip(&record.history.last().unwrap_or(&record.initial).terms) {
        println!("{name:<8} {v:.3e}");
    }
    let nets = p.network_fields(&record.theta)?;
    let fields: Vec<&dyn DifferentiableField> = nets.iter().map(|n| n as &dyn DifferentiableField).collect();
    if a.two_slab {
        let x = 0.5 * (cfg.solid_x0 + cfg.length);
        let tf = nets[0].forward(&[x, 0.0])?[2];
        let ts = nets[1].forward(&[x, 0.0])?[0];
        println!("interface temperature fluid {tf:.5} solid {ts:.5} analytic {:.5}", cfg.slab_interface_temperature());
    }
    let report = grid_metrics("conjugate_heat", p, &fields, &[], &conjugate_layout(&cfg), 100, 100, &[], "none")?;
    println!("{}", report.table());
    Ok(())
}
