//! Run configuration files and the `train`, `evaluate`, `sweep` and
//! `sample` commands behind the `pinn-forge` binary.
//!
//! A run configuration is a TOML file with a few top-level keys and one
//! section holding the fields of the chosen case:
//!
//! ```toml
//! case = "conjugate_heat"
//! seed = 3
//!
//! [conjugate]
//! n_fluid = 1600
//! fluid_network = { hidden = [50, 50, 50] }
//!
//! [[schedule]]
//! optimizer = "adam"
//! epochs = 5000
//!
//! [[schedule]]
//! optimizer = "bfgs"
//! epochs = 500
//! ```
//!
//! Unknown keys are rejected and omitted fields take their defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{DifferentiableField, NetworkField};
use crate::cases::{
    build_bfs_assimilation, build_conjugate_heat, build_forced_ns, build_parametric_cavity, build_poisson_gamma,
    build_rans_twin, predict_grid, BfsConfig, Case, CavityConfig, ConjugateConfig, FieldGrid, ForcedNsConfig, GridSpec,
    Observations, PoissonConfig, RansTwin, RansTwinConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    bfs_layout, cavity_layout, conjugate_layout, forced_ns_layout, grid_metrics, parse_metrics, poisson_layout,
    record_entries, trial_statistics, twin_metrics, write_metrics, MetricsReport, Reference, Region, TrialStatistics,
};
use crate::loss::TrainingProblem;
use crate::network::{read_checkpoint, write_checkpoint, Activation, ParameterVector};
use crate::optim::{run_schedule, HistoryRow, LineSearchKind, OptimizerKind, Phase, RunRecord, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    ParametricCavity,
    ConjugateHeat,
    BfsAssimilation,
    ForcedNs,
    RansTwin,
    PoissonGamma,
}

impl CaseKind {
    pub const ALL: [CaseKind; 6] = [
        CaseKind::ParametricCavity,
        CaseKind::ConjugateHeat,
        CaseKind::BfsAssimilation,
        CaseKind::ForcedNs,
        CaseKind::RansTwin,
        CaseKind::PoissonGamma,
    ];

    pub fn id(self) -> &'static str {
        match self {
            CaseKind::ParametricCavity => "parametric_cavity",
            CaseKind::ConjugateHeat => "conjugate_heat",
            CaseKind::BfsAssimilation => "bfs_assimilation",
            CaseKind::ForcedNs => "manufactured:forced_ns",
            CaseKind::RansTwin => "manufactured:rans_twin",
            CaseKind::PoissonGamma => "manufactured:poisson_gamma",
        }
    }

    /// The config section holding the case fields.
    pub fn section(self) -> &'static str {
        match self {
            CaseKind::ParametricCavity => "cavity",
            CaseKind::ConjugateHeat => "conjugate",
            CaseKind::BfsAssimilation => "bfs",
            CaseKind::ForcedNs => "forced_ns",
            CaseKind::RansTwin => "rans_twin",
            CaseKind::PoissonGamma => "poisson",
        }
    }

    pub fn default_schedule(self) -> Schedule {
        match self {
            CaseKind::ParametricCavity => CavityConfig::default_schedule(),
            CaseKind::ConjugateHeat => ConjugateConfig::default_schedule(),
            CaseKind::BfsAssimilation => BfsConfig::default_schedule(),
            CaseKind::ForcedNs => ForcedNsConfig::default_schedule(),
            CaseKind::RansTwin => RansTwinConfig::default_schedule(),
            CaseKind::PoissonGamma => PoissonConfig::default_schedule(),
        }
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseKind::ALL.into_iter().find(|k| k.id() == s).ok_or_else(|| {
            let ids: Vec<&str> = CaseKind::ALL.iter().map(|k| k.id()).collect();
            Error::config("case", format!("unknown case `{s}`, expected one of {ids:?}"))
        })
    }
}

/// A parsed run configuration. After [`RunConfig::parse`] the section of the
/// chosen case and the schedule are always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// `x,y,U` observation file of the step case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugate: Option<ConjugateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bfs: Option<BfsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_ns: Option<ForcedNsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rans_twin: Option<RansTwinConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<PoissonConfig>,
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .split_once("unknown field `")
        .and_then(|(_, rest)| rest.split_once('`'))
        .map(|(k, _)| k.to_string())
        .unwrap_or_else(|| "config".to_string());
    Error::config(key, e.to_string().trim().replace('\n', " "))
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Defaults for `kind`, with no section overrides.
    pub fn new(kind: CaseKind) -> Self {
        let bare = RunConfig {
            case: kind.id().into(),
            seed: 0,
            out: None,
            observations: None,
            schedule: None,
            cavity: None,
            conjugate: None,
            bfs: None,
            forced_ns: None,
            rans_twin: None,
            poisson: None,
        };
        bare.resolve().expect("defaults are valid")
    }

    /// Parses a config. Tables given in the file are merged key by key over
    /// the case defaults, so a partial nested table keeps the case's values
    /// for everything it leaves out.
    pub fn parse(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(toml_error)?;
        let kind = user.get("case").and_then(|v| v.as_str()).and_then(|c| c.parse::<CaseKind>().ok());
        let merged = match kind {
            Some(k) => {
                let mut base = toml::Table::try_from(RunConfig::new(k)).map_err(|e| Error::parse("run config", e.to_string()))?;
                merge_tables(&mut base, user);
                base
            }
            None => user,
        };
        let cfg: RunConfig = merged.try_into().map_err(toml_error)?;
        cfg.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("run config", e.to_string()))
    }

    pub fn kind(&self) -> CaseKind {
        self.case.parse().expect("case id checked on parse")
    }

    fn resolve(mut self) -> Result<Self> {
        let kind: CaseKind = self.case.parse()?;
        let present = [
            ("cavity", self.cavity.is_some()),
            ("conjugate", self.conjugate.is_some()),
            ("bfs", self.bfs.is_some()),
            ("forced_ns", self.forced_ns.is_some()),
            ("rans_twin", self.rans_twin.is_some()),
            ("poisson", self.poisson.is_some()),
        ];
        for (name, set) in present {
            if set && name != kind.section() {
                return Err(Error::config(name, format!("section does not apply to case `{}`", kind.id())));
            }
        }
        if self.observations.is_some() && kind != CaseKind::BfsAssimilation {
            return Err(Error::config("observations", format!("does not apply to case `{}`", kind.id())));
        }
        match kind {
            CaseKind::ParametricCavity => {
                self.cavity.get_or_insert_with(Default::default).validate()?;
            }
            CaseKind::ConjugateHeat => {
                self.conjugate.get_or_insert_with(Default::default).validate()?;
            }
            CaseKind::BfsAssimilation => {
                self.bfs.get_or_insert_with(Default::default).validate()?;
            }
            CaseKind::ForcedNs => {
                self.forced_ns.get_or_insert_with(Default::default);
            }
            CaseKind::RansTwin => {
                self.rans_twin.get_or_insert_with(Default::default).validate()?;
            }
            CaseKind::PoissonGamma => {
                self.poisson.get_or_insert_with(Default::default);
            }
        }
        self.schedule.get_or_insert_with(|| kind.default_schedule()).validate()?;
        Ok(self)
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule.clone().unwrap_or_else(|| self.kind().default_schedule())
    }

    /// SHA-256 of the canonical JSON form (sorted keys) of everything except
    /// the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        let hash = Sha256::digest(value.to_string().as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn default_out(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", self.kind().section(), self.seed)))
    }
}

/// A built case; the twin keeps its ground truth.
#[derive(Debug)]
pub enum Built {
    Case(Case),
    Twin(Box<RansTwin>),
}

impl Built {
    pub fn case(&self) -> &Case {
        match self {
            Built::Case(c) => c,
            Built::Twin(t) => &t.case,
        }
    }

    pub fn problem(&self) -> &TrainingProblem {
        &self.case().problem
    }
}

/// Builds the configured case with samplings drawn from `seed`.
pub fn build(cfg: &RunConfig, seed: u64) -> Result<Built> {
    Ok(match cfg.kind() {
        CaseKind::ParametricCavity => Built::Case(build_parametric_cavity(&cfg.cavity.clone().unwrap_or_default(), seed)?),
        CaseKind::ConjugateHeat => Built::Case(build_conjugate_heat(&cfg.conjugate.clone().unwrap_or_default(), seed)?),
        CaseKind::BfsAssimilation => {
            let path = cfg
                .observations
                .as_ref()
                .ok_or_else(|| Error::MissingObservations(PathBuf::from("<observations key not set>")))?;
            let obs = Observations::load_csv(path)?;
            Built::Case(build_bfs_assimilation(&cfg.bfs.clone().unwrap_or_default(), &obs, seed)?)
        }
        CaseKind::ForcedNs => Built::Case(build_forced_ns(&cfg.forced_ns.clone().unwrap_or_default(), seed)?),
        CaseKind::RansTwin => Built::Twin(Box::new(build_rans_twin(&cfg.rans_twin.clone().unwrap_or_default(), seed)?)),
        CaseKind::PoissonGamma => Built::Case(build_poisson_gamma(&cfg.poisson.clone().unwrap_or_default(), seed)?),
    })
}

/// Final term values, extra parameters and case-specific inference metrics.
fn run_metrics(cfg: &RunConfig, built: &Built, record: &RunRecord) -> Result<BTreeMap<String, f64>> {
    let problem = built.problem();
    let mut m = BTreeMap::new();
    let last = record.history.last().unwrap_or(&record.initial);
    for (name, v) in record.term_names.iter().zip(&last.terms) {
        m.insert(format!("term.{name}"), *v);
    }
    let extras = &record.theta[problem.extras_range()];
    for (e, v) in problem.extras.iter().zip(extras) {
        m.insert(format!("extra.{}", e.name), *v);
    }
    if !record.completed() {
        return Ok(m);
    }
    match built {
        Built::Twin(twin) => {
            let net = problem.network_field(&record.theta, 0)?;
            m.extend(twin_metrics(twin, &net, cfg.seed)?);
        }
        Built::Case(_) => {
            if let (Some(p), Some(g)) = (&cfg.poisson, m.get("extra.gamma").copied()) {
                m.insert("gamma_rel_error".into(), (g - p.gamma_true).abs() / p.gamma_true);
            }
        }
    }
    Ok(m)
}

/// Writes one checkpoint per network role, the extra parameters, the loss
/// history, the metrics file and the run record into `dir`.
pub fn write_run(dir: &Path, problem: &TrainingProblem, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, slot) in problem.networks.iter().enumerate() {
        let params = ParameterVector(record.theta[problem.network_range(i)].to_vec());
        write_checkpoint(&dir.join(format!("{}.ckpt", slot.name)), &slot.spec, &params)?;
    }
    if !problem.extras.is_empty() {
        let extras: Vec<(String, String)> = problem
            .extras
            .iter()
            .zip(&record.theta[problem.extras_range()])
            .map(|(e, v)| (e.name.clone(), v.to_string()))
            .collect();
        write_metrics(&dir.join("extras.txt"), &extras)?;
    }
    record.write_history_csv(&dir.join("history.csv"))?;
    let mut entries = vec![
        ("digest".to_string(), record.digest.clone()),
        ("seed".to_string(), record.seed.to_string()),
        ("outcome".to_string(), if record.completed() { "completed".into() } else { "aborted".into() }),
    ];
    entries.extend(record_entries(record));
    write_metrics(&dir.join("metrics.txt"), &entries)?;
    std::fs::write(dir.join("record.json"), record.to_json()?)?;
    Ok(())
}

/// Trains the configured case and writes every artifact into `dir`.
pub fn train(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<RunRecord> {
    let built = build(cfg, cfg.seed)?;
    for w in &built.case().warnings {
        eprintln!("warning: {w}");
    }
    let problem = built.problem();
    let start = Instant::now();
    let mut cb = |r: &HistoryRow| {
        if !quiet && r.iter % 500 == 0 {
            eprintln!("{:>7} {:<6} loss {:.4e}  {:.0}s", r.iter, r.phase, r.loss, start.elapsed().as_secs_f64());
        }
    };
    let mut record = run_schedule(problem, problem.initial_theta(cfg.seed).0, &cfg.schedule(), cfg.seed, &cfg.digest(), &mut cb)?;
    record.metrics = run_metrics(cfg, &built, &record)?;
    write_run(dir, problem, &record)?;
    Ok(record)
}

/// Loads the networks (and extra parameters) of a trained problem from a run
/// directory, or from a single checkpoint file for one-network problems.
pub fn load_networks(problem: &TrainingProblem, path: &Path) -> Result<(Vec<NetworkField>, Vec<f64>)> {
    let (files, dir): (Vec<PathBuf>, PathBuf) = if path.is_dir() {
        let files = problem.networks.iter().map(|s| path.join(format!("{}.ckpt", s.name))).collect();
        (files, path.to_path_buf())
    } else {
        if problem.networks.len() != 1 {
            return Err(Error::contract(format!(
                "{} networks need a run directory, not a single checkpoint",
                problem.networks.len()
            )));
        }
        (vec![path.to_path_buf()], path.parent().unwrap_or(Path::new(".")).to_path_buf())
    };
    let mut nets = Vec::with_capacity(files.len());
    for (slot, file) in problem.networks.iter().zip(&files) {
        let (spec, params) = read_checkpoint(file)?;
        if spec != slot.spec {
            return Err(Error::contract(format!(
                "checkpoint {} has layers {:?}, the config expects {:?}",
                file.display(),
                spec.layer_sizes(),
                slot.spec.layer_sizes()
            )));
        }
        nets.push(NetworkField::new(spec, params, slot.map.clone())?);
    }
    let mut extras: Vec<f64> = problem.extras.iter().map(|e| e.initial).collect();
    let extras_file = dir.join("extras.txt");
    if !problem.extras.is_empty() && extras_file.exists() {
        let saved: BTreeMap<String, String> = parse_metrics(&std::fs::read_to_string(&extras_file)?)?.into_iter().collect();
        for (e, v) in problem.extras.iter().zip(extras.iter_mut()) {
            if let Some(s) = saved.get(&e.name) {
                *v = s.parse().map_err(|err| Error::parse("extras", format!("{}: {err}", e.name)))?;
            }
        }
    }
    Ok((nets, extras))
}

/// Output channel names and pressure (gauge) channels of network `i`.
fn channels(kind: CaseKind, i: usize) -> (Vec<&'static str>, Vec<usize>) {
    match (kind, i) {
        (CaseKind::ConjugateHeat, 1) => (vec!["T"], vec![]),
        (CaseKind::ParametricCavity | CaseKind::ConjugateHeat | CaseKind::ForcedNs, _) => (vec!["u", "v", "T", "p"], vec![3]),
        (CaseKind::BfsAssimilation | CaseKind::RansTwin, _) => (vec!["U", "V", "P", "nu_tilde"], vec![2]),
        (CaseKind::PoissonGamma, _) => (vec!["u"], vec![]),
    }
}

fn layout(cfg: &RunConfig, params: Option<&[f64]>) -> Result<Vec<Region>> {
    Ok(match cfg.kind() {
        CaseKind::ParametricCavity => {
            let c = cfg.cavity.clone().unwrap_or_default();
            let (mu, kf) = match params {
                Some([mu, kf]) => (*mu, *kf),
                Some(p) => return Err(Error::config("params", format!("expected `mu,kf`, got {} values", p.len()))),
                None => (0.5 * (c.mu_range[0] + c.mu_range[1]), 0.5 * (c.kf_range[0] + c.kf_range[1])),
            };
            cavity_layout(&c, mu, kf)
        }
        CaseKind::ConjugateHeat => conjugate_layout(&cfg.conjugate.clone().unwrap_or_default()),
        CaseKind::BfsAssimilation => bfs_layout(&cfg.bfs.clone().unwrap_or_default()),
        CaseKind::RansTwin => bfs_layout(&cfg.rans_twin.clone().unwrap_or_default().channel),
        CaseKind::ForcedNs => forced_ns_layout(),
        CaseKind::PoissonGamma => poisson_layout(),
    })
}

/// Salt separating the evaluation samplings from the training ones.
const EVAL_SALT: u64 = 0x0E7A_1E7A_1E7A_1E7A;

/// Reference grid files given on the command line: `region=path`, or a bare
/// path for the first region.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceArg {
    pub region: Option<String>,
    pub path: PathBuf,
}

impl FromStr for ReferenceArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once('=') {
            Some((r, p)) if !r.is_empty() && !p.is_empty() => Ok(Self {
                region: Some(r.to_string()),
                path: p.into(),
            }),
            Some(_) => Err(format!("expected `region=path`, got `{s}`")),
            None => Ok(Self { region: None, path: s.into() }),
        }
    }
}

/// `NxM` grid size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize(pub usize, pub usize);

impl FromStr for GridSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once('x').ok_or_else(|| format!("expected NxM, got `{s}`"))?;
        let nx = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
        let ny = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
        if nx == 0 || ny == 0 {
            return Err("grid sizes must be at least 1".into());
        }
        Ok(GridSize(nx, ny))
    }
}

/// Evaluates trained networks: the metrics report over an `nx × ny` grid
/// (written as `report.txt`) and one `grid_<region>.csv` per region. The
/// manufactured cases use their analytic solution when no reference file
/// is given. Boundary rows use samplings disjoint from training.
pub fn evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    grid: GridSize,
    references: &[ReferenceArg],
    params: Option<&[f64]>,
    out: &Path,
) -> Result<MetricsReport> {
    let kind = cfg.kind();
    let built = build(cfg, cfg.seed ^ EVAL_SALT)?;
    let problem = built.problem();
    let (nets, extras) = load_networks(problem, checkpoint)?;
    let fields: Vec<&dyn DifferentiableField> = nets.iter().map(|n| n as &dyn DifferentiableField).collect();
    let regions = layout(cfg, params)?;

    let mut grids: Vec<(String, FieldGrid)> = Vec::new();
    let mut provenance: Vec<String> = Vec::new();
    for r in references {
        let region = match &r.region {
            Some(name) => {
                if !regions.iter().any(|g| &g.name == name) {
                    return Err(Error::config("reference", format!("no region `{name}` in case `{}`", kind.id())));
                }
                name.clone()
            }
            None => regions[0].name.clone(),
        };
        grids.push((region, FieldGrid::load_csv(&r.path)?));
        provenance.push(format!("grid:{}", r.path.display()));
    }
    let analytic: Option<Box<dyn DifferentiableField>> = match (&built, kind) {
        (Built::Twin(t), _) => Some(Box::new(t.reference.clone())),
        (_, CaseKind::ForcedNs) => Some(Box::new(ForcedNsConfig::reference())),
        (_, CaseKind::PoissonGamma) => Some(Box::new(PoissonConfig::reference())),
        _ => None,
    };
    let mut refs: Vec<(&str, Reference)> = grids.iter().map(|(n, g)| (n.as_str(), Reference::Grid(g))).collect();
    if let Some(a) = &analytic {
        for r in &regions {
            if !refs.iter().any(|(n, _)| *n == r.name) {
                refs.push((r.name.as_str(), Reference::Analytic(a.as_ref())));
            }
        }
        provenance.push("analytic".into());
    }
    let provenance = if provenance.is_empty() { "none".to_string() } else { provenance.join(";") };
    let report = grid_metrics(kind.id(), problem, &fields, &extras, &regions, grid.0, grid.1, &refs, &provenance)?;

    std::fs::create_dir_all(out)?;
    let mut entries = report.entries();
    for (e, v) in problem.extras.iter().zip(&extras) {
        entries.push((format!("extra.{}", e.name), v.to_string()));
    }
    if let Built::Twin(t) = &built {
        for (k, v) in twin_metrics(t, &nets[0], cfg.seed)? {
            entries.push((format!("inference.{k}"), v.to_string()));
        }
    }
    write_metrics(&out.join("report.txt"), &entries)?;
    for region in &regions {
        let net = region.fields.first().map_or(0, |f| f.network);
        let (names, gauge) = channels(kind, net);
        let spec = GridSpec::new(grid.0, grid.1, region.bounds).with_parameters(region.parameters.clone());
        let inside = region.inside.clone();
        let g = predict_grid(&nets[net], &names, &gauge, &spec, &move |x, y| inside(x, y))?;
        g.save_csv(&out.join(format!("grid_{}.csv", region.name)))?;
    }
    Ok(report)
}

/// A sweep axis `name=v1,v2,...`. `optimizer` rewrites the quasi-Newton
/// phases, `activation` sets every network of the case, and any other name
/// is a dotted config key such as `rans_twin.channel.n_interior`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<String>,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, values) = s.split_once('=').ok_or_else(|| format!("expected name=v1,v2,..., got `{s}`"))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if name.trim().is_empty() || values.is_empty() {
            return Err(format!("axis `{s}` needs a name and at least one value"));
        }
        Ok(Axis {
            name: name.trim().to_string(),
            values,
        })
    }
}

/// Rewrites a schedule for the optimizer axis: `adam` turns every
/// quasi-Newton phase into ADAM with the learning rate of the last ADAM
/// phase; `bfgs_armijo`, `bfgs_wolfe`, `lbfgs_armijo` and `lbfgs_wolfe`
/// swap the quasi-Newton method and line search.
pub fn with_optimizer(schedule: &Schedule, name: &str) -> Result<Schedule> {
    let lr = schedule
        .phases
        .iter()
        .rev()
        .find(|p| p.optimizer == OptimizerKind::Adam)
        .map_or(1e-3, |p| p.lr);
    let swap = |kind: OptimizerKind, ls: LineSearchKind| -> Schedule {
        let phases = schedule
            .phases
            .iter()
            .map(|p| match p.optimizer {
                OptimizerKind::Adam => p.clone(),
                _ => Phase {
                    optimizer: kind,
                    line_search: ls,
                    ..p.clone()
                },
            })
            .collect();
        Schedule { phases }
    };
    Ok(match name {
        "adam" => Schedule {
            phases: schedule
                .phases
                .iter()
                .map(|p| match p.optimizer {
                    OptimizerKind::Adam => p.clone(),
                    _ => Phase::adam(p.epochs, lr),
                })
                .collect(),
        },
        "bfgs_armijo" => swap(OptimizerKind::Bfgs, LineSearchKind::Armijo),
        "bfgs_wolfe" => swap(OptimizerKind::Bfgs, LineSearchKind::Wolfe),
        "lbfgs_armijo" => swap(OptimizerKind::Lbfgs, LineSearchKind::Armijo),
        "lbfgs_wolfe" => swap(OptimizerKind::Lbfgs, LineSearchKind::Wolfe),
        other => {
            return Err(Error::config(
                "optimizer",
                format!("unknown optimizer `{other}`, expected adam, bfgs_armijo, bfgs_wolfe, lbfgs_armijo or lbfgs_wolfe"),
            ))
        }
    })
}

fn set_activation(v: &mut toml::Value, name: &str) {
    if let toml::Value::Table(t) = v {
        if t.contains_key("hidden") {
            t.insert("activation".into(), toml::Value::String(name.into()));
        }
        for (_, child) in t.iter_mut() {
            set_activation(child, name);
        }
    }
}

fn literal(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

/// The configuration with one axis set to `value`.
pub fn apply_axis(cfg: &RunConfig, name: &str, value: &str) -> Result<RunConfig> {
    if name == "optimizer" {
        let mut c = cfg.clone();
        c.schedule = Some(with_optimizer(&cfg.schedule(), value)?);
        return Ok(c);
    }
    let mut v = toml::Value::try_from(cfg).map_err(|e| Error::parse("run config", e.to_string()))?;
    if name == "activation" {
        value.parse::<Activation>().map_err(|e| Error::config("activation", e.to_string()))?;
        if let Some(section) = v.get_mut(cfg.kind().section()) {
            set_activation(section, value);
        }
    } else {
        let mut node = &mut v;
        let parts: Vec<&str> = name.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::config(name, "path crosses a non-table value"))?;
            if i + 1 == parts.len() {
                if !table.contains_key(*part) {
                    return Err(Error::config(name, "unknown key"));
                }
                table.insert(part.to_string(), literal(value));
                break;
            }
            node = table.get_mut(*part).ok_or_else(|| Error::config(name, "unknown key"))?;
        }
    }
    let c: RunConfig = v.try_into().map_err(toml_error)?;
    c.resolve()
}

fn dir_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
        .collect()
}

/// One trial of a sweep.
#[derive(Debug, Clone)]
pub struct Trial {
    pub label: String,
    pub config: RunConfig,
    pub dir: PathBuf,
}

/// The cross product of the axis values, each with `trials` consecutive
/// seeds starting at the config seed. Labels join `name=value` with `;`.
pub fn sweep_trials(base: &RunConfig, axes: &[Axis], trials: usize, out: &Path) -> Result<Vec<Trial>> {
    let mut combos: Vec<(String, RunConfig)> = vec![(String::new(), base.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(combos.len() * axis.values.len());
        for (label, cfg) in &combos {
            for value in &axis.values {
                let l = if label.is_empty() { format!("{}={value}", axis.name) } else { format!("{label};{}={value}", axis.name) };
                next.push((l, apply_axis(cfg, &axis.name, value)?));
            }
        }
        combos = next;
    }
    let mut out_trials = Vec::with_capacity(combos.len() * trials);
    for (label, cfg) in combos {
        let label = if label.is_empty() { "base".to_string() } else { label };
        for t in 0..trials as u64 {
            let mut c = cfg.clone();
            c.seed = base.seed + t;
            let dir = out.join(dir_label(&label)).join(format!("seed{}", c.seed));
            c.out = Some(dir.clone());
            out_trials.push(Trial {
                label: label.clone(),
                config: c,
                dir,
            });
        }
    }
    Ok(out_trials)
}

/// Runs every trial, at most `jobs` at a time, and writes `summary.csv`
/// (five-number summaries per configuration and metric) and `trials.csv`.
pub fn sweep(base: &RunConfig, axes: &[Axis], trials: usize, jobs: usize, out: &Path) -> Result<TrialStatistics> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let list = sweep_trials(base, axes, trials, out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::contract(e.to_string()))?;
    let records: Vec<RunRecord> = pool.install(|| {
        list.par_iter()
            .map(|t| {
                let r = train(&t.config, &t.dir, true)?;
                eprintln!("{} seed {}: loss {:.4e}", t.label, t.config.seed, r.final_loss());
                Ok(r)
            })
            .collect::<Result<_>>()
    })?;
    let runs: Vec<(String, &RunRecord)> = list.iter().zip(&records).map(|(t, r)| (t.label.clone(), r)).collect();
    let stats = trial_statistics(&runs)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.csv"), stats.to_csv())?;
    std::fs::write(out.join("trials.csv"), stats.trials_csv())?;
    Ok(stats)
}

/// Writes every sampling of the case as `<name>.csv`, plus the generated
/// observations of the twin as `observations.csv` (usable as the step
/// case's observation file). Returns the files written.
pub fn sample(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let built = build(cfg, cfg.seed)?;
    for w in &built.case().warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (name, set) in &built.case().samplings {
        let path = out.join(format!("{name}.csv"));
        set.save_csv(&path)?;
        files.push(path);
    }
    if let Built::Twin(t) = &built {
        let path = out.join("observations.csv");
        t.observations.save_csv(&path)?;
        files.push(path);
    }
    Ok(files)
}

#[derive(Debug, Parser)]
#[command(name = "pinn-forge", version, about = "Train and evaluate physics-informed networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a case; writes checkpoints, history.csv, metrics.txt and record.json.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Metrics and field dumps of trained networks on a Cartesian grid.
    Evaluate {
        config: PathBuf,
        /// Run directory or single checkpoint; defaults to the config's output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "100x100")]
        grid: GridSize,
        /// Reference grid CSV, as `path` or `region=path`.
        #[arg(long)]
        reference: Vec<ReferenceArg>,
        /// Frozen coefficients of the parametric cavity, `mu,kf`.
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated trials over the cross product of axis values.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: Vec<Axis>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the collocation sets of a case as CSV.
    Sample {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process exit status for an error: 2 for configuration problems, 3 for a
/// missing observation file, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::MissingObservations(_) => 3,
        _ => 1,
    }
}

/// Status for a run that stopped before its schedule finished.
pub const EXIT_ABORTED: i32 = 4;

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train { config, seed, out, quiet } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.unwrap_or_else(|| cfg.default_out());
            let record = train(&cfg, &dir, quiet)?;
            println!("wrote {}", dir.display());
            for (k, v) in record_entries(&record) {
                println!("{k} = {v}");
            }
            if let crate::optim::Outcome::Aborted { phase, message } = &record.outcome {
                eprintln!("phase {phase} aborted: {message}");
                return Ok(EXIT_ABORTED);
            }
            Ok(0)
        }
        Command::Evaluate {
            config,
            checkpoint,
            grid,
            reference,
            params,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.default_out());
            let base = if ckpt.is_dir() { ckpt.clone() } else { ckpt.parent().unwrap_or(Path::new(".")).to_path_buf() };
            let out = out.unwrap_or_else(|| base.join(format!("eval_{}x{}", grid.0, grid.1)));
            let report = evaluate(&cfg, &ckpt, grid, &reference, params.as_deref(), &out)?;
            println!("{}", report.table());
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Sweep {
            config,
            axis,
            trials,
            jobs,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-sweep", cfg.kind().section())));
            let stats = sweep(&cfg, &axis, trials, jobs, &out)?;
            print!("{}", stats.to_csv());
            Ok(0)
        }
        Command::Sample { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.default_out().join("samples"));
            for f in sample(&cfg, &out)? {
                println!("{}", f.display());
            }
            Ok(0)
        }
    }
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
