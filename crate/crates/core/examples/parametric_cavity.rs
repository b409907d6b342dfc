//! Trains one network over a family of heated cavities, then evaluates it
//! at a viscosity/conductivity pair of your choice. Goes through the same
//! train and evaluate entry points as the command-line tool.
//!
//!     cargo run --release --example parametric_cavity -- --adam 2000 --lbfgs 1000 --mu 0.03 --kf 0.05

use std::path::PathBuf;

use clap::Parser;
use pinn_forge::cli::{self, CaseKind, GridSize, RunConfig};
use pinn_forge::optim::{LineSearchKind, Phase, Schedule};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 300)]
    adam: usize,
    #[arg(long, default_value_t = 200)]
    lbfgs: usize,
    #[arg(long, default_value_t = 400)]
    interior: usize,
    #[arg(long, default_value_t = 0.05)]
    mu: f64,
    #[arg(long, default_value_t = 0.05)]
    kf: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs/example-cavity")]
    out: PathBuf,
}

fn main() -> pinn_forge::Result<()> {
    pinn_forge::init_threads();
    let a = Args::parse();
    let mut cfg = RunConfig::new(CaseKind::ParametricCavity);
    cfg.seed = a.seed;
    cfg.schedule = Some(Schedule::new(vec![
        Phase::adam(a.adam, 1e-3),
        Phase::lbfgs(a.lbfgs, LineSearchKind::Wolfe),
    ])?);
    if let Some(c) = cfg.cavity.as_mut() {
        c.n_interior = a.interior;
    }
    let record = cli::train(&cfg, &a.out, false)?;
    println!("final loss {:.3e} ({:?})", record.final_loss(), record.outcome);
    let report = cli::evaluate(&cfg, &a.out, GridSize(60, 60), &[], Some(&[a.mu, a.kf]), &a.out.join("eval"))?;
    println!("μ = {}, k_f = {}", a.mu, a.kf);
    println!("{}", report.table());
    Ok(())
}
