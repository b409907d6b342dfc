//! A small robustness study on the RANS twin: collocation size crossed with
//! sensor placement, several seeds per cell, medians and spreads printed.
//!
//!     cargo run --release --example robustness_sweep -- --trials 10 --sizes 2000,8000

use std::path::PathBuf;

use clap::Parser;
use pinn_forge::cli::{self, Axis, CaseKind, RunConfig};
use pinn_forge::optim::{LineSearchKind, Phase, Schedule};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "500,1000")]
    sizes: String,
    #[arg(long, default_value = "standard,star")]
    placements: String,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 200)]
    adam: usize,
    #[arg(long, default_value_t = 200)]
    bfgs: usize,
    #[arg(long, default_value = "runs/example-sweep")]
    out: PathBuf,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    pinn_forge::init_threads();
    let a = Args::parse();
    let mut base = RunConfig::new(CaseKind::RansTwin);
    base.schedule = Some(Schedule::new(vec![Phase::adam(a.adam, 1e-3), Phase::bfgs(a.bfgs, LineSearchKind::Armijo)])?);
    let axes = [
        format!("rans_twin.channel.n_interior={}", a.sizes).parse::<Axis>()?,
        format!("rans_twin.placement={}", a.placements).parse::<Axis>()?,
    ];
    let stats = cli::sweep(&base, &axes, a.trials, a.jobs, &a.out)?;
    println!("{:<64} {:>10} {:>10} {:>10}", "configuration", "ν_t err", "residual", "data");
    let mut seen = Vec::new();
    for row in &stats.rows {
        if seen.contains(&row.config) {
            continue;
        }
        seen.push(row.config.clone());
        let med = |m: &str| stats.get(&row.config, m).map_or(f64::NAN, |r| r.summary.median);
        println!(
            "{:<64} {:>10.3e} {:>10.3e} {:>10.3e}",
            row.config,
            med("nut_rel_l2"),
            med("residual_rmse"),
            med("data_rmse")
        );
    }
    println!("per-trial values in {}", a.out.join("trials.csv").display());
    Ok(())
}
