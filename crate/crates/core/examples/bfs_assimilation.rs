//! Assimilates velocity sections over a backward-facing step and infers
//! the eddy-viscosity field. Without `--observations` the sections are
//! sampled from the analytic channel flow used by the twin study, which is
//! only a stand-in for measured data.
//!
//!     cargo run --release --example bfs_assimilation -- --observations obs.csv

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use pinn_forge::autodiff::DifferentiableField;
use pinn_forge::cases::{build_bfs_assimilation, generate_synthetic_observations, BfsConfig, Observations, RansTwinConfig};
use pinn_forge::eval::{bfs_layout, grid_metrics};
use pinn_forge::optim::{run_schedule, LineSearchKind, Phase, Schedule};

#[derive(Parser)]
struct Args {
    #[arg(long)]
    observations: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    interior: usize,
    #[arg(long, default_value_t = 500)]
    adam: usize,
    #[arg(long, default_value_t = 500)]
    bfgs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> pinn_forge::Result<()> {
    pinn_forge::init_threads();
    let a = Args::parse();
    let cfg = BfsConfig {
        n_interior: a.interior,
        ..BfsConfig::default()
    };
    let obs = match &a.observations {
        Some(p) => Observations::load_csv(p)?,
        None => {
            let truth = RansTwinConfig::default().reference();
            generate_synthetic_observations(&truth, 0, &cfg, &cfg.sections, cfg.n_per_section, cfg.noise_sigma, a.seed)?
        }
    };
    println!("{} observations", obs.len());
    let case = build_bfs_assimilation(&cfg, &obs, a.seed)?;
    for w in &case.warnings {
        eprintln!("warning: {w}");
    }
    let p = &case.problem;
    let schedule = Schedule::new(vec![Phase::adam(a.adam, 1e-3), Phase::bfgs(a.bfgs, LineSearchKind::Armijo)])?;
    let start = Instant::now();
    let record = run_schedule(p, p.initial_theta(a.seed).0, &schedule, a.seed, "example", &mut |r| {
        if r.iter % 250 == 0 {
            println!("{:>5} {:<5} loss {:.3e}  {:.0}s", r.iter, r.phase, r.loss, start.elapsed().as_secs_f64());
        }
    })?;
    let net = p.network_field(&record.theta, 0)?;
    let fields: [&dyn DifferentiableField; 1] = [&net];
    let report = grid_metrics("bfs_assimilation", p, &fields, &[], &bfs_layout(&cfg), 115, 30, &[], "none")?;
    println!("{}", report.table());

    // ν_t = ν̃² along the centre line.
    for x in [1.0, 4.0, 9.0, 18.0] {
        let y = if x < cfg.step_length { (cfg.step_height + cfg.height) / 2.0 } else { cfg.height / 2.0 };
        let nt = net.forward(&[x, y])?[3];
        println!("ν_t({x:>4}, {y:.1}) = {:.4e}", nt * nt);
    }
    Ok(())
}
