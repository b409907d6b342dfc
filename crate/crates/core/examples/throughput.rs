//! Times loss and gradient evaluations for each built-in case.

use std::time::Instant;

use pinn_forge::cases::{
    build_conjugate_heat, build_forced_ns, build_parametric_cavity, build_poisson_gamma, build_rans_twin, BfsConfig, Case,
    CavityConfig, ConjugateConfig, ForcedNsConfig, PoissonConfig, RansTwinConfig,
};
use pinn_forge::loss::evaluate;

fn time(name: &str, case: &Case) {
    let theta = case.problem.initial_theta(0).0;
    evaluate(&case.problem, &theta, true).unwrap();
    let reps = 5;
    let t = Instant::now();
    for _ in 0..reps {
        evaluate(&case.problem, &theta, true).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / reps as f64;
    let points: usize = case.problem.terms.iter().map(|t| t.points.len()).sum();
    println!("{name:<22} {:>7} params {points:>7} points  {:>8.2} ms/eval", case.problem.n_params(), dt * 1e3);
}

fn main() {
    time("forced_ns", &build_forced_ns(&ForcedNsConfig::default(), 0).unwrap());
    time("poisson_gamma", &build_poisson_gamma(&PoissonConfig::default(), 0).unwrap());
    for n in [2000, 8000] {
        let mut cfg = RansTwinConfig::default();
        cfg.channel = BfsConfig { n_interior: n, ..cfg.channel };
        time(&format!("rans_twin n={n}"), &build_rans_twin(&cfg, 0).unwrap().case);
    }
    time("conjugate two_slab", &build_conjugate_heat(&ConjugateConfig::two_slab(), 0).unwrap());
    time("conjugate", &build_conjugate_heat(&ConjugateConfig::default(), 0).unwrap());
    time("cavity (single)", &build_parametric_cavity(&CavityConfig::single(0.05, 0.05), 0).unwrap());
    time("cavity (parametric)", &build_parametric_cavity(&CavityConfig::default(), 0).unwrap());
}
