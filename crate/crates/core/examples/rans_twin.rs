//! Trains the manufactured RANS twin and reports how well the eddy
//! viscosity is recovered from velocity sections alone.
//!
//!     cargo run --release --example rans_twin -- --interior 2000 --placement star

use std::time::Instant;

use clap::Parser;
use pinn_forge::cases::{build_rans_twin, BfsConfig, Placement, RansTwinConfig};
use pinn_forge::eval::twin_metrics;
use pinn_forge::optim::{LineSearchKind, Phase, Schedule};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 2000)]
    interior: usize,
    #[arg(long, default_value_t = 400)]
    walls: usize,
    #[arg(long, default_value = "standard")]
    placement: String,
    #[arg(long, default_value_t = 1000)]
    adam: usize,
    #[arg(long, default_value_t = 2000)]
    bfgs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    every: usize,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    nut_bump: Option<f64>,
}

fn main() -> pinn_forge::Result<()> {
    let a = Args::parse();
    let placement = match a.placement.as_str() {
        "star" => Placement::Star,
        _ => Placement::Standard,
    };
    let base = RansTwinConfig::default();
    let cfg = RansTwinConfig {
        channel: BfsConfig {
            n_interior: a.interior,
            n_wall: a.walls,
            ..base.channel.clone()
        },
        placement,
        bump_width: a.width.unwrap_or(base.bump_width),
        amplitude: a.amplitude.unwrap_or(base.amplitude),
        nut_bump: a.nut_bump.unwrap_or(base.nut_bump),
        ..base
    };
    let twin = build_rans_twin(&cfg, a.seed)?;
    let schedule = Schedule::new(vec![Phase::adam(a.adam, 1e-3), Phase::bfgs(a.bfgs, LineSearchKind::Armijo)])?;
    let problem = &twin.case.problem;
    let start = Instant::now();
    let mut cb = |r: &pinn_forge::optim::HistoryRow| {
        if r.iter % a.every == 0 {
            println!("{:>6} {:<5} loss {:.3e} terms {:?}  {:.0}s", r.iter, r.phase, r.loss, r.terms, start.elapsed().as_secs_f64());
        }
    };
    let record = pinn_forge::optim::run_schedule(problem, problem.initial_theta(a.seed).0, &schedule, a.seed, "example", &mut cb)?;
    let net = problem.network_field(&record.theta, 0)?;
    for (k, v) in twin_metrics(&twin, &net, a.seed)? {
        println!("{k:<18} {v:.4e}");
    }
    println!("final loss {:.3e} after {:.0}s", record.final_loss(), start.elapsed().as_secs_f64());
    Ok(())
}
