//! Writes the collocation, boundary and observation sets of every scenario
//! as CSV, ready for plotting. The step-flow case gets stand-in sections
//! sampled from the twin's analytic flow above the step.
//!
//!     cargo run --release --example sampling_dump -- runs/samplings

use std::path::PathBuf;

use pinn_forge::cases::{generate_synthetic_observations, BfsConfig, RansTwinConfig};
use pinn_forge::cli::{self, CaseKind, RunConfig};

fn main() -> pinn_forge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/samplings".into()));
    let kinds = [
        CaseKind::ParametricCavity,
        CaseKind::ConjugateHeat,
        CaseKind::ForcedNs,
        CaseKind::PoissonGamma,
        CaseKind::RansTwin,
    ];
    for kind in kinds {
        let cfg = RunConfig::new(kind);
        let dir = out.join(kind.section());
        for f in cli::sample(&cfg, &dir)? {
            println!("{}", f.display());
        }
    }
    let channel = BfsConfig::default();
    let truth = RansTwinConfig::default().reference();
    let obs = generate_synthetic_observations(&truth, 0, &channel, &channel.sections, channel.n_per_section, 0.0, 0)?;
    let obs_path = out.join("bfs_observations.csv");
    obs.save_csv(&obs_path)?;
    let mut bfs = RunConfig::new(CaseKind::BfsAssimilation);
    bfs.observations = Some(obs_path);
    for f in cli::sample(&bfs, &out.join("bfs_assimilation"))? {
        println!("{}", f.display());
    }
    Ok(())
}
