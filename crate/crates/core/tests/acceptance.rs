//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line (straight
//! to stderr, so it shows without `--nocapture`) and then asserts.
//!
//! The criteria run one at a time so their wall-clock limits are measured
//! without interference. Run with `cargo test --release --test acceptance`.

use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use pinn_forge::autodiff::{evaluate_jet, loss_gradient, DifferentiableField};
use pinn_forge::cases::{
    build_bfs_assimilation, build_conjugate_heat, build_forced_ns, build_parametric_cavity, build_poisson_gamma,
    build_rans_twin, generate_synthetic_observations, BfsConfig, CavityConfig, ConjugateConfig, FieldGrid,
    ForcedNsConfig, Observations, PoissonConfig, RansTwinConfig,
};
use pinn_forge::cli::{self, Axis, CaseKind, GridSize, RunConfig};
use pinn_forge::eval::{conjugate_layout, forced_ns_layout, grid_metrics, parse_metrics, parse_summary_csv, MetricsReport, Reference, RowKind};
use pinn_forge::loss::{total_loss, TrainingProblem};
use pinn_forge::network::{read_checkpoint, ParameterVector};
use pinn_forge::optim::benchmarks::{log_spectrum, quadratic, rosenbrock};
use pinn_forge::optim::{
    bfgs_step, lbfgs_step, read_history_csv, run_schedule, BfgsState, HistoryRow, LbfgsState, LineSearch, LineSearchKind,
    Objective, Phase, RunRecord, Schedule, WolfeParams,
};
use pinn_forge::sampling::{latin_hypercube, SamplingSet};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

/// Salt for evaluation samplings disjoint from the training ones.
const EVAL_SALT: u64 = 0xACCE_97A1_CE00_0001;

fn verdict(id: u32, name: &str, checks: &[(String, bool)], elapsed: Duration, limit: Duration) -> bool {
    let in_time = elapsed <= limit;
    let pass = in_time && checks.iter().all(|(_, ok)| *ok);
    let mut line = format!(
        "[{}] criterion {id} ({name}): {:.1}s of {:.0}s",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    for (what, ok) in checks {
        line.push_str(&format!("; {}{what}", if *ok { "" } else { "NOT " }));
    }
    let _ = writeln!(std::io::stderr(), "{line}");
    pass
}

fn quiet() -> impl FnMut(&HistoryRow) {
    |_| {}
}

fn train(problem: &TrainingProblem, schedule: Schedule, seed: u64) -> RunRecord {
    let record = run_schedule(problem, problem.initial_theta(seed).0, &schedule, seed, "acceptance", &mut quiet()).unwrap();
    assert!(record.completed(), "{:?}", record.outcome);
    record
}

fn two_phase(adam: usize, bfgs: usize) -> Schedule {
    Schedule::new(vec![Phase::adam(adam, 1e-3), Phase::bfgs(bfgs, LineSearchKind::Armijo)]).unwrap()
}

fn fields_of(problem: &TrainingProblem, theta: &[f64]) -> Vec<pinn_forge::autodiff::NetworkField> {
    problem.network_fields(theta).unwrap()
}

fn as_dyn(nets: &[pinn_forge::autodiff::NetworkField]) -> Vec<&dyn DifferentiableField> {
    nets.iter().map(|n| n as &dyn DifferentiableField).collect()
}

// ---------------------------------------------------------------------------
// 1. Autodiff exactness

fn gradient_cases(seed: u64) -> Vec<(&'static str, TrainingProblem)> {
    let cavity = CavityConfig {
        n_interior: 40,
        n_wall: 6,
        ..CavityConfig::default()
    };
    let conjugate = ConjugateConfig {
        n_fluid: 120,
        n_solid: 40,
        n_boundary: 12,
        n_interface: 12,
        ..ConjugateConfig::default()
    };
    let bfs = BfsConfig {
        n_interior: 200,
        n_wall: 60,
        ..BfsConfig::default()
    };
    let truth = RansTwinConfig::default().reference();
    let obs = generate_synthetic_observations(&truth, 0, &bfs, &bfs.sections, 22, 0.0, seed).unwrap();
    vec![
        ("cavity", build_parametric_cavity(&cavity, seed).unwrap().problem),
        ("conjugate", build_conjugate_heat(&conjugate, seed).unwrap().problem),
        ("bfs", build_bfs_assimilation(&bfs, &obs, seed).unwrap().problem),
    ]
}

/// Largest relative error over a random subset of parameter coordinates.
/// Coordinates whose derivative is tiny compared with the largest one are
/// measured against `1e-3 ‖g‖∞` instead of their own size, where central
/// differences only resolve rounding noise.
fn parameter_gradient_error(problem: &TrainingProblem, seed: u64, coords: usize) -> f64 {
    let theta = problem.initial_theta(seed);
    let (_, g) = loss_gradient(problem, &theta).unwrap();
    let gmax = g.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1D);
    let n = problem.n_params();
    let mut idx: Vec<usize> = (0..coords).map(|_| rng.random_range(0..n)).collect();
    idx.extend(problem.extras_range());
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in idx {
        let mut a = theta.0.clone();
        let mut b = theta.0.clone();
        a[i] += h;
        b[i] -= h;
        let fd = (total_loss(problem, &a).unwrap() - total_loss(problem, &b).unwrap()) / (2.0 * h);
        worst = worst.max((g.0[i] - fd).abs() / fd.abs().max(1e-3 * gmax));
    }
    worst
}

/// Largest relative errors of the first and second spatial input
/// derivatives of every network output against central differences.
fn input_jet_error(problem: &TrainingProblem, seed: u64) -> (f64, f64) {
    let theta = problem.initial_theta(seed);
    let nets = fields_of(problem, &theta.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1E7);
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for (net, slot) in nets.iter().zip(&problem.networks) {
        let dim = net.input_dim();
        for _ in 0..5 {
            // points inside the unit box of the input map
            let x: Vec<f64> = (0..dim)
                .map(|k| {
                    let t: f64 = rng.random_range(-1.0..1.0);
                    (t - slot.map.shift[k]) / slot.map.scale[k]
                })
                .collect();
            let jets = evaluate_jet(net, &x).unwrap();
            for k in 0..dim.min(2) {
                let span = 1.0 / slot.map.scale[k];
                let at = |h: f64| {
                    let mut y = x.clone();
                    y[k] += h;
                    net.forward(&y).unwrap()
                };
                let (h1, h2) = (1e-5 * span, 1e-3 * span);
                let (p1, m1) = (at(h1), at(-h1));
                let (p2, m2, c) = (at(h2), at(-h2), at(0.0));
                for (o, j) in jets.iter().enumerate() {
                    let d1 = (p1[o] - m1[o]) / (2.0 * h1);
                    let d2 = (p2[o] - 2.0 * c[o] + m2[o]) / (h2 * h2);
                    // derivatives in units of the input span
                    e1 = e1.max((j.grad[k] - d1).abs() * span / (d1.abs() * span).max(1e-3));
                    e2 = e2.max((j.diag2[k] - d2).abs() * span * span / (d2.abs() * span * span).max(1e-3));
                }
            }
        }
    }
    (e1, e2)
}

#[test]
fn criterion_1_autodiff_exactness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (mut gp, mut j1, mut j2) = (0.0f64, 0.0f64, 0.0f64);
    for seed in [1u64, 2, 3] {
        for (_, problem) in gradient_cases(seed) {
            gp = gp.max(parameter_gradient_error(&problem, seed, 40));
            let (a, b) = input_jet_error(&problem, seed);
            j1 = j1.max(a);
            j2 = j2.max(b);
        }
    }
    let checks = vec![
        (format!("parameter gradient rel. error {gp:.2e} < 1e-5"), gp < 1e-5),
        (format!("jet first derivatives {j1:.2e} < 1e-6"), j1 < 1e-6),
        (format!("jet second derivatives {j2:.2e} < 1e-4"), j2 < 1e-4),
    ];
    assert!(verdict(1, "autodiff exactness", &checks, start.elapsed(), Duration::from_secs(60)));
}

// ---------------------------------------------------------------------------
// 2. Optimizer suite

fn drive(f: &dyn Objective, x0: Vec<f64>, dense: bool, ls: &LineSearch, cap: usize) -> (f64, usize) {
    let mut x = x0;
    let mut cur = f.value_grad(&x).unwrap();
    let mut it = 0;
    if dense {
        let mut st = BfgsState::new(x.len()).unwrap();
        while cur.grad_norm() >= 1e-6 && it < cap {
            bfgs_step(&mut st, &mut x, &mut cur, f, ls).unwrap();
            it += 1;
        }
    } else {
        let mut st = LbfgsState::new(10);
        while cur.grad_norm() >= 1e-6 && it < cap {
            lbfgs_step(&mut st, &mut x, &mut cur, f, ls).unwrap();
            it += 1;
        }
    }
    (cur.grad_norm(), it)
}

#[test]
fn criterion_2_optimizer_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks = Vec::new();
    let rosen_start = |n: usize| (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect::<Vec<f64>>();
    let ill = quadratic(&log_spectrum(20, 1e4), 7);
    let problems: Vec<(&str, Box<dyn Objective>, Vec<f64>)> = vec![
        ("Rosenbrock-2D", Box::new(rosenbrock(2)), rosen_start(2)),
        ("Rosenbrock-10D", Box::new(rosenbrock(10)), rosen_start(10)),
        ("quadratic κ=1e4", Box::new(ill.clone()), vec![0.0; 20]),
    ];
    for (name, f, x0) in &problems {
        let (g, it) = drive(f.as_ref(), x0.clone(), true, &LineSearch::armijo(), 10_000);
        checks.push((format!("BFGS-Armijo {name} ‖g‖ {g:.1e} in {it}"), g < 1e-6));
        let (g, it) = drive(f.as_ref(), x0.clone(), false, &LineSearch::wolfe(), 10_000);
        checks.push((format!("L-BFGS-Wolfe {name} ‖g‖ {g:.1e} in {it}"), g < 1e-6));
    }

    // Quadratic termination: exact-enough line searches on dim-10 quadratics.
    let exact = LineSearch::Wolfe(WolfeParams {
        c2: 1e-6,
        ..Default::default()
    });
    let mut worst = 0;
    let mut solved = true;
    for seed in 0..5u64 {
        for spectrum in [log_spectrum(10, 1e2), log_spectrum(10, 1e3), (1..=10).map(|i| i as f64).collect()] {
            let f = quadratic(&spectrum, seed);
            let (g, it) = drive(&f, vec![0.0; 10], true, &exact, 11);
            solved &= g < 1e-6;
            worst = worst.max(it);
        }
    }
    checks.push((format!("dense BFGS dim-10 quadratics in ≤ 11 iterations (worst {worst})"), solved && worst <= 11));

    let adam = run_schedule(&ill, vec![0.0; 20], &Schedule::new(vec![Phase::adam(20_000, 1e-3)]).unwrap(), 0, "", &mut quiet()).unwrap();
    let bfgs = run_schedule(&ill, vec![0.0; 20], &Schedule::new(vec![Phase::bfgs(500, LineSearchKind::Armijo)]).unwrap(), 0, "", &mut quiet()).unwrap();
    let (la, lb) = (adam.final_loss(), bfgs.final_loss());
    checks.push((format!("ADAM 20k loss {la:.2e} ≥ 1e3 × BFGS-500 loss {lb:.2e}"), la >= 1e3 * lb));
    assert!(verdict(2, "optimizer suite", &checks, start.elapsed(), Duration::from_secs(60)));
}

// ---------------------------------------------------------------------------
// 3. Manufactured forward solve

fn evaluation_report(
    case: &str,
    eval_problem: &TrainingProblem,
    theta: &[f64],
    layout: &[pinn_forge::eval::Region],
    references: &[(&str, Reference)],
) -> MetricsReport {
    let nets = fields_of(eval_problem, theta);
    let extras = theta[eval_problem.extras_range()].to_vec();
    grid_metrics(case, eval_problem, &as_dyn(&nets), &extras, layout, 100, 100, references, "acceptance").unwrap()
}

fn rows(report: &MetricsReport, kind: RowKind) -> Vec<(String, f64)> {
    report
        .rows
        .iter()
        .filter(|r| r.kind == kind)
        .filter_map(|r| r.value.map(|v| (format!("{}.{}", r.region, r.label), v)))
        .collect()
}

fn worst(rows: &[(String, f64)]) -> (String, f64) {
    rows.iter().cloned().fold((String::new(), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

#[test]
fn criterion_3_manufactured_forward_solve() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let cfg = ForcedNsConfig::default();
    let case = build_forced_ns(&cfg, 0).unwrap();
    let record = train(&case.problem, ForcedNsConfig::default_schedule(), 0);
    let eval = build_forced_ns(&cfg, EVAL_SALT).unwrap().problem;
    let truth = ForcedNsConfig::reference();
    let report = evaluation_report("forced_ns", &eval, &record.theta, &forced_ns_layout(), &[("fluid", Reference::Analytic(&truth))]);
    let fields = rows(&report, RowKind::Field);
    let residuals = rows(&report, RowKind::Residual);
    let (wf, vf) = worst(&fields);
    let (wr, vr) = worst(&residuals);
    let checks = vec![
        (format!("{} field MSEs, worst {wf} {vf:.2e} < 1e-4", fields.len()), fields.len() == 4 && vf < 1e-4),
        (format!("{} residual MSEs, worst {wr} {vr:.2e} < 1e-3", residuals.len()), residuals.len() == 4 && vr < 1e-3),
    ];
    assert!(verdict(3, "manufactured forward solve", &checks, start.elapsed(), Duration::from_secs(600)));
}

// ---------------------------------------------------------------------------
// 4. Conjugate heat transfer

#[test]
fn criterion_4_conjugate_heat() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut checks = Vec::new();

    let start = Instant::now();
    let slab = ConjugateConfig::two_slab();
    let case = build_conjugate_heat(&slab, 0).unwrap();
    let record = train(&case.problem, two_phase(2000, 500), 0);
    let nets = fields_of(&case.problem, &record.theta);
    let target = slab.slab_interface_temperature();
    let mut dev = 0.0f64;
    for i in 0..=20 {
        let x = slab.solid_x0 + (slab.length - slab.solid_x0) * i as f64 / 20.0;
        dev = dev.max((nets[0].forward(&[x, 0.0]).unwrap()[2] - target).abs());
        dev = dev.max((nets[1].forward(&[x, 0.0]).unwrap()[0] - target).abs());
    }
    let last = record.history.last().unwrap();
    let term = |n: &str| last.terms[record.term_names.iter().position(|t| t == n).unwrap()];
    let (c1, c2) = (term("L_c1"), term("L_c2"));
    let slab_time = start.elapsed();
    checks.push((format!("two-slab interface T within {dev:.2e} of {target:.5} (< 1e-2)"), dev < 1e-2));
    checks.push((format!("L_c1 {c1:.1e}, L_c2 {c2:.1e} < 1e-6"), c1 < 1e-6 && c2 < 1e-6));
    checks.push((format!("two-slab in {:.0}s < 300s", slab_time.as_secs_f64()), slab_time <= Duration::from_secs(300)));

    let start = Instant::now();
    let cfg = ConjugateConfig::default();
    let case = build_conjugate_heat(&cfg, 0).unwrap();
    let record = train(&case.problem, two_phase(5000, 500), 0);
    let eval = build_conjugate_heat(&cfg, EVAL_SALT).unwrap().problem;
    let report = evaluation_report("conjugate_heat", &eval, &record.theta, &conjugate_layout(&cfg), &[]);
    let _ = writeln!(std::io::stderr(), "{}", report.table());
    let bcs = rows(&report, RowKind::Boundary);
    let residuals = rows(&report, RowKind::Residual);
    let (wb, vb) = worst(&bcs);
    let heat = report.get("fluid", "Heat eq.").unwrap_or(f64::INFINITY);
    let others: Vec<(String, f64)> = residuals.iter().filter(|(n, _)| n != "fluid.Heat eq.").cloned().collect();
    let (wr, vr) = worst(&others);
    let full_time = start.elapsed();
    checks.push((format!("{} BC MSEs, worst {wb} {vb:.2e} < 1e-4", bcs.len()), bcs.len() == 8 && vb < 1e-4));
    checks.push((format!("residual MSEs, worst {wr} {vr:.2e} < 1e-2"), others.len() == 4 && vr < 1e-2));
    checks.push((format!("fluid heat-equation residual {heat:.2e} < 2e-2"), heat < 2e-2));
    checks.push((format!("full case in {:.0}s < 1800s", full_time.as_secs_f64()), full_time <= Duration::from_secs(1800)));
    assert!(verdict(4, "conjugate heat", &checks, slab_time + full_time, Duration::from_secs(2100)));
}

// ---------------------------------------------------------------------------
// 5. Inverse problems

#[test]
fn criterion_5_inverse_problems() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let cfg = RansTwinConfig::default();
    let twin = build_rans_twin(&cfg, 0).unwrap();
    let record = train(&twin.case.problem, RansTwinConfig::default_schedule(), 0);
    let net = twin.case.problem.network_field(&record.theta, 0).unwrap();
    let metrics = pinn_forge::eval::twin_metrics(&twin, &net, 0).unwrap();
    let nut = metrics["nut_rel_l2"];
    let channel = &cfg.channel;
    let inlet = channel
        .section_points(0.0, 50)
        .iter()
        .map(|p| twin.reference.values(p).unwrap()[0].abs())
        .fold(0.0, f64::max);
    let mut checks = vec![(format!("ν_t relative L2 {:.2}% < 10%", 100.0 * nut), nut < 0.10)];
    for x in [9.0, 18.0] {
        let pts = channel.section_points(x, 50);
        let se: f64 = pts
            .iter()
            .map(|p| (net.forward(p).unwrap()[0] - twin.reference.values(p).unwrap()[0]).powi(2))
            .sum();
        let rmse = (se / pts.len() as f64).sqrt() / inlet;
        checks.push((format!("U profile RMSE at x={x} {:.3}% of inlet < 2%", 100.0 * rmse), rmse < 0.02));
    }

    let pcfg = PoissonConfig::default();
    let case = build_poisson_gamma(&pcfg, 0).unwrap();
    let record = train(&case.problem, PoissonConfig::default_schedule(), 0);
    let gamma = record.theta[case.problem.extras_range()][0];
    let err = (gamma - pcfg.gamma_true).abs() / pcfg.gamma_true;
    checks.push((format!("Poisson γ = {gamma:.6} from {} observations, error {:.3}% < 1%", pcfg.n_observations, 100.0 * err), err < 0.01));
    assert!(verdict(5, "inverse problems", &checks, start.elapsed(), Duration::from_secs(1200)));
}

// ---------------------------------------------------------------------------
// 6. Robustness sweep

#[test]
fn criterion_6_robustness_sweep() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig::new(CaseKind::RansTwin);
    let sizes: Axis = "rans_twin.channel.n_interior=2000,8000".parse().unwrap();
    let by_size = cli::sweep(&base, &[sizes], 10, 1, &dir.path().join("sizes")).unwrap();
    let star_base = cli::apply_axis(&base, "rans_twin.placement", "star").unwrap();
    let star = cli::sweep(&star_base, &[], 10, 1, &dir.path().join("star")).unwrap();

    let median = |s: &pinn_forge::eval::TrialStatistics, config: &str, metric: &str| s.get(config, metric).unwrap().summary.median;
    let (r2, r8) = (
        median(&by_size, "rans_twin.channel.n_interior=2000", "residual_rmse"),
        median(&by_size, "rans_twin.channel.n_interior=8000", "residual_rmse"),
    );
    let (d2, d8) = (
        median(&by_size, "rans_twin.channel.n_interior=2000", "data_rmse"),
        median(&by_size, "rans_twin.channel.n_interior=8000", "data_rmse"),
    );
    let (n_std, n_star) = (median(&by_size, "rans_twin.channel.n_interior=2000", "nut_rel_l2"), median(&star, "base", "nut_rel_l2"));
    let data_ratio = d2.max(d8) / d2.min(d8);
    let checks = vec![
        (format!("median residual RMSE {r2:.3e} (2000) > {r8:.3e} (8000)"), r8 < r2),
        (format!("median data RMSE {d2:.3e} vs {d8:.3e}, ratio {data_ratio:.2} < 2"), data_ratio < 2.0),
        (format!("88* median ν_t error {n_star:.3} ≥ 2 × standard {n_std:.3}"), n_star >= 2.0 * n_std),
    ];
    assert!(verdict(6, "robustness sweep", &checks, start.elapsed(), Duration::from_secs(7200)));
}

// ---------------------------------------------------------------------------
// 7. Determinism and round-trips

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn lhs_is_stratified(n: usize, bounds: &[(f64, f64)], seed: u64) -> bool {
    let s = latin_hypercube(n, bounds, seed).unwrap();
    (0..bounds.len()).all(|k| {
        let (lo, hi) = bounds[k];
        let mut seen = vec![0usize; n];
        for p in s.points() {
            if p[k] < lo || p[k] > hi {
                return false;
            }
            let j = (((p[k] - lo) / (hi - lo)) * n as f64).floor().min(n as f64 - 1.0) as usize;
            seen[j] += 1;
        }
        seen.iter().all(|&c| c == 1)
    })
}

#[test]
fn criterion_7_determinism_and_round_trips() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();

    // Same config and seed twice: byte-identical artifacts.
    let mut cfg = RunConfig::parse(
        "case = \"conjugate_heat\"\nseed = 5\n[conjugate]\nn_fluid = 80\nn_solid = 30\nn_boundary = 10\nn_interface = 10\n\
         fluid_network = { hidden = [12, 12] }\nsolid_network = { hidden = [8] }\n\
         [[schedule]]\noptimizer = \"adam\"\nepochs = 30\n[[schedule]]\noptimizer = \"bfgs\"\nepochs = 20\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = cli::train(&cfg, &a, true).unwrap();
    let rb = cli::train(&cfg, &b, true).unwrap();
    let same = ["fluid.ckpt", "solid.ckpt", "history.csv"].iter().all(|f| read(&a.join(f)) == read(&b.join(f)));
    checks.push(("bit-identical checkpoints and histories".to_string(), same && ra.same_result(&rb)));
    cfg.seed = 6;
    let rc = cli::train(&cfg, &dir.path().join("c"), true).unwrap();
    checks.push(("a different seed changes θ".to_string(), rc.theta != ra.theta));

    // Every artifact reads back to what was written.
    let problem = cli::build(&cfg, 5).unwrap();
    let (spec, params) = read_checkpoint(&a.join("fluid.ckpt")).unwrap();
    let ckpt = spec == problem.problem().networks[0].spec && params == ParameterVector(ra.theta[problem.problem().network_range(0)].to_vec());
    let (names, hist) = read_history_csv(&a.join("history.csv")).unwrap();
    let history = names == ra.term_names && hist.len() == ra.history.len() + 1 && hist[1..] == ra.history[..];
    let record = RunRecord::from_json(&std::fs::read_to_string(a.join("record.json")).unwrap()).unwrap() == ra;
    let metrics = parse_metrics(&std::fs::read_to_string(a.join("metrics.txt")).unwrap())
        .unwrap()
        .iter()
        .any(|(k, v)| k == "final_loss" && v.parse::<f64>().unwrap() == ra.final_loss());
    let config = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap() == cfg;

    let samples = cli::sample(&cfg, &dir.path().join("samples")).unwrap();
    let built = cli::build(&cfg, cfg.seed).unwrap();
    let sampling = samples.len() == built.case().samplings.len()
        && built.case().samplings.iter().zip(&samples).all(|((_, set), path)| {
            let back = SamplingSet::read_csv(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap();
            back.coords() == set.coords() && back.tag == set.tag
        });

    let ev = dir.path().join("eval");
    let report = cli::evaluate(&cfg, &a, GridSize(9, 7), &[], None, &ev).unwrap();
    let grid = FieldGrid::load_csv(&ev.join("grid_fluid.csv")).unwrap();
    let again = FieldGrid::parse_csv(&grid.to_csv()).unwrap();
    let grids = (grid.nx, grid.ny) == (9, 7) && again.to_csv() == grid.to_csv();
    let report_back = parse_metrics(&std::fs::read_to_string(ev.join("report.txt")).unwrap()).unwrap();
    let reports = report.entries().iter().all(|e| report_back.contains(e));

    let twin = build_rans_twin(&RansTwinConfig::default(), 3).unwrap();
    let obs_path = dir.path().join("obs.csv");
    twin.observations.save_csv(&obs_path).unwrap();
    let observations = Observations::load_csv(&obs_path).unwrap() == twin.observations;

    let stats_csv = "config,metric,min,q1,median,q3,max\nbase,final_loss,1,2,3,4,5\n";
    let summary = parse_summary_csv(stats_csv).map(|r| r.len() == 1 && r[0].2.median == 3.0).unwrap_or(false);

    for (what, ok) in [
        ("checkpoint", ckpt),
        ("loss history", history),
        ("run record", record),
        ("metrics file", metrics),
        ("run config", config),
        ("sampling CSVs", sampling),
        ("field grids", grids),
        ("metrics report", reports),
        ("observations", observations),
        ("summary CSV", summary),
    ] {
        checks.push((format!("{what} round-trips"), ok));
    }

    let mut runner = TestRunner::new(ProptestConfig {
        cases: 256,
        ..ProptestConfig::default()
    });
    let strategy = (1usize..=4, 1usize..=4, any::<u64>(), -5.0f64..5.0, 0.1f64..10.0);
    let lhs = runner
        .run(&strategy, |(n, dims, seed, lo, width)| {
            let bounds: Vec<(f64, f64)> = (0..dims).map(|k| (lo + k as f64, lo + k as f64 + width)).collect();
            prop_assert!(lhs_is_stratified(n, &bounds, seed));
            Ok(())
        })
        .is_ok();
    let larger = (0..50u64).all(|s| lhs_is_stratified(1 + (s as usize * 37) % 500, &[(0.0, 2.0), (-1.0, 1.0), (3.0, 3.5), (0.0, 1.0)], s));
    checks.push(("LHS stratification property (n, dims ≤ 4; also n ≤ 500)".to_string(), lhs && larger));
    assert!(verdict(7, "determinism and round-trips", &checks, start.elapsed(), Duration::from_secs(60)));
}
