//! RANS data assimilation over a backward facing step: mean-velocity
//! observations on a few sections, turbulent viscosity as the unknown field.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_positive, polyline_sample, substream, Case, NetworkConfig};
use crate::autodiff::{DifferentiableField, DynOp};
use crate::error::{Error, Result};
use crate::loss::{bind, LossTerm, NetworkSlot, TrainingProblem};
use crate::network::InputMap;
use crate::optim::{LineSearchKind, Phase, Schedule};
use crate::physics::{Rans, RansCoefficients};
use crate::sampling::{latin_hypercube_rejecting, SamplingSet, Segment, SetTag};

/// Lengths are in step heights; the inlet section sits at `x = 0` and the
/// step occupies `[0, step_length] × [0, step_height]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BfsConfig {
    pub length: f64,
    pub height: f64,
    pub step_length: f64,
    /// Zero gives a straight channel.
    pub step_height: f64,
    pub sections: Vec<f64>,
    pub held_out_sections: Vec<f64>,
    pub n_per_section: usize,
    pub nu: f64,
    pub rho: f64,
    pub network: NetworkConfig,
    pub n_interior: usize,
    pub n_wall: usize,
    pub noise_sigma: f64,
    /// Also pin `ν̃ = 0` on the walls inside `L_W`.
    pub wall_viscosity: bool,
}

impl Default for BfsConfig {
    fn default() -> Self {
        Self {
            length: 23.0,
            height: 6.0,
            step_length: 3.0,
            step_height: 1.0,
            sections: vec![0.0, 7.0, 13.0, 22.0],
            held_out_sections: vec![9.0, 18.0],
            n_per_section: 22,
            nu: 1.0 / 5100.0,
            rho: 1.0,
            network: NetworkConfig::new(&[8, 16, 32, 16, 8]),
            n_interior: 8000,
            n_wall: 2750,
            noise_sigma: 0.0,
            wall_viscosity: false,
        }
    }
}

impl BfsConfig {
    pub fn default_schedule() -> Schedule {
        Schedule {
            phases: vec![Phase::adam(5000, 1e-3), Phase::bfgs(15_000, LineSearchKind::Armijo)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("length", self.length), ("height", self.height), ("nu", self.nu), ("rho", self.rho)] {
            check_positive(k, v)?;
        }
        if !(self.step_height >= 0.0 && self.step_height < self.height) {
            return Err(Error::config("step_height", "must lie in [0, height)"));
        }
        if !(self.step_length >= 0.0 && self.step_length < self.length) {
            return Err(Error::config("step_length", "must lie in [0, length)"));
        }
        if self.n_interior == 0 {
            return Err(Error::config("n_interior", "must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma", "must be non-negative"));
        }
        for &x in self.sections.iter().chain(&self.held_out_sections) {
            if !(0.0..=self.length).contains(&x) {
                return Err(Error::config("sections", format!("section x = {x} lies outside the channel")));
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> RansCoefficients {
        RansCoefficients {
            nu: self.nu,
            rho: self.rho,
        }
    }

    pub fn bounds(&self) -> [(f64, f64); 2] {
        [(0.0, self.length), (0.0, self.height)]
    }

    fn in_step(&self, x: f64, y: f64) -> bool {
        x < self.step_length && y < self.step_height
    }

    /// Closed flow region (walls included).
    pub fn in_flow(&self, x: f64, y: f64) -> bool {
        (0.0..=self.length).contains(&x) && (0.0..=self.height).contains(&y) && !self.in_step(x, y)
    }

    /// Lower wall height at abscissa `x`.
    pub fn floor(&self, x: f64) -> f64 {
        if x < self.step_length {
            self.step_height
        } else {
            0.0
        }
    }

    /// Solid walls: top, the step top and face, and the lower floor.
    pub fn walls(&self) -> Vec<Segment> {
        let (l, h, sl, sh) = (self.length, self.height, self.step_length, self.step_height);
        let mut w = vec![Segment::new("top", [0.0, h], [l, h], [0.0, 1.0])];
        if sh > 0.0 && sl > 0.0 {
            w.push(Segment::new("step_top", [0.0, sh], [sl, sh], [0.0, -1.0]));
            w.push(Segment::new("step_face", [sl, 0.0], [sl, sh], [-1.0, 0.0]));
            w.push(Segment::new("floor", [sl, 0.0], [l, 0.0], [0.0, -1.0]));
        } else {
            w.push(Segment::new("floor", [0.0, 0.0], [l, 0.0], [0.0, -1.0]));
        }
        w
    }

    /// Observation points of one section: cell-centred, equispaced in y
    /// between the floor and the top.
    pub fn section_points(&self, x: f64, n: usize) -> Vec<[f64; 2]> {
        let lo = self.floor(x);
        let dy = (self.height - lo) / n as f64;
        (0..n).map(|i| [x, lo + (i as f64 + 0.5) * dy]).collect()
    }
}

/// Streamwise velocity observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observations {
    pub points: Vec<[f64; 2]>,
    pub u: Vec<f64>,
}

impl Observations {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,U\n");
        for (p, u) in self.points.iter().zip(&self.u) {
            let _ = writeln!(s, "{},{},{}", p[0], p[1], u);
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Reads `x,y,U` rows; blank lines and `#` comments are skipped.
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut out = Observations::default();
        let mut header = false;
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if !header {
                let cols: Vec<&str> = t.split(',').map(str::trim).collect();
                if cols != ["x", "y", "U"] {
                    return Err(Error::parse("observations", format!("expected header `x,y,U`, got `{t}`")));
                }
                header = true;
                continue;
            }
            let f: Vec<f64> = t
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse("observations", format!("line {}: {e}", k + 1)))?;
            if f.len() != 3 {
                return Err(Error::parse("observations", format!("line {} has {} fields", k + 1, f.len())));
            }
            out.points.push([f[0], f[1]]);
            out.u.push(f[2]);
        }
        if !header {
            return Err(Error::parse("observations", "missing header"));
        }
        Ok(out)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingObservations(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn sampling(&self) -> Result<SamplingSet> {
        let pts: Vec<Vec<f64>> = self.points.iter().map(|p| p.to_vec()).collect();
        SamplingSet::from_points(&pts, SetTag::Data)
    }
}

/// Samples channel `channel` of `truth` at `n_per_section` points on each
/// section, adding Gaussian noise of standard deviation `sigma`.
pub fn generate_synthetic_observations(
    truth: &dyn DifferentiableField,
    channel: usize,
    cfg: &BfsConfig,
    sections: &[f64],
    n_per_section: usize,
    sigma: f64,
    seed: u64,
) -> Result<Observations> {
    if !(sigma >= 0.0) {
        return Err(Error::contract("noise sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    let mut out = Observations::default();
    for &x in sections {
        for p in cfg.section_points(x, n_per_section) {
            let mut u = truth.values(&p)?[channel];
            if sigma > 0.0 {
                u += noise.sample(&mut rng);
            }
            out.points.push(p);
            out.u.push(u);
        }
    }
    Ok(out)
}

/// One network `(x, y) → (U, V, P̃, ν̃)`; terms `L_RANS`, `L_W`, `L_data`.
/// No inlet, outlet or top-velocity conditions are imposed.
pub fn build_bfs_assimilation(cfg: &BfsConfig, observations: &Observations, seed: u64) -> Result<Case> {
    assemble(cfg, observations, Arc::new(Rans { coeffs: cfg.coefficients() }), seed)
}

pub(crate) fn assemble(cfg: &BfsConfig, observations: &Observations, rans: Arc<dyn DynOp>, seed: u64) -> Result<Case> {
    cfg.validate()?;
    let outside: Vec<usize> = observations
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| !cfg.in_flow(p[0], p[1]))
        .map(|(i, _)| i)
        .collect();
    if !outside.is_empty() {
        return Err(Error::ObservationsOutside { indices: outside });
    }
    let spec = cfg.network.spec(2, 4)?;
    let net = NetworkSlot::new("flow", spec, InputMap::to_unit_box(&cfg.bounds()));
    let (u, v, p, n) = (bind(0, 0), bind(0, 1), bind(0, 2), bind(0, 3));
    let interior = Arc::new(latin_hypercube_rejecting(cfg.n_interior, &cfg.bounds(), substream(seed, 0), |q| cfg.in_step(q[0], q[1]))?);
    let mut samplings = vec![("interior".to_string(), interior.clone())];
    let mut warnings = Vec::new();
    let mut terms = vec![LossTerm::pde("L_RANS", interior, vec![u, v, p, n], rans)];
    if cfg.n_wall == 0 {
        warnings.push("n_wall = 0: no wall sampling, L_W omitted".to_string());
    } else {
        let walls = Arc::new(polyline_sample("walls", &cfg.walls(), cfg.n_wall, substream(seed, 1))?);
        let wall_fields = if cfg.wall_viscosity { vec![u, v, n] } else { vec![u, v] };
        let targets = wall_fields.iter().map(|_| 0.0.into()).collect();
        terms.push(LossTerm::dirichlet("L_W", walls.clone(), wall_fields, targets));
        samplings.push(("walls".to_string(), walls));
    }
    if observations.is_empty() {
        warnings.push("no observations: L_data omitted".to_string());
    } else {
        let data = Arc::new(observations.sampling()?);
        terms.push(LossTerm::data("L_data", data.clone(), u, observations.u.clone()));
        samplings.push(("data".to_string(), data));
    }
    Ok(Case {
        problem: TrainingProblem::new(vec![net], vec![], terms)?,
        samplings,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::NetworkField;
    use crate::loss::evaluate;

    fn obs(cfg: &BfsConfig) -> Observations {
        let mut o = Observations::default();
        for &x in &cfg.sections {
            for p in cfg.section_points(x, cfg.n_per_section) {
                o.points.push(p);
                o.u.push(p[1] / 6.0);
            }
        }
        o
    }

    #[test]
    fn default_layout() {
        let cfg = BfsConfig::default();
        let o = obs(&cfg);
        assert_eq!(o.len(), 88);
        let c = build_bfs_assimilation(&cfg, &o, 2).unwrap();
        assert_eq!(c.problem.term_names(), vec!["L_RANS", "L_W", "L_data"]);
        assert_eq!(c.samplings[0].1.len(), 8000);
        assert_eq!(c.samplings[1].1.len(), 2750);
        assert!(c.samplings[0].1.points().all(|p| cfg.in_flow(p[0], p[1])));
        assert!(o.points.iter().all(|p| cfg.in_flow(p[0], p[1])));
        // the inlet section only spans the channel above the step
        assert!(o.points[..22].iter().all(|p| p[1] > 1.0));
    }

    #[test]
    fn observations_inside_the_step_are_rejected() {
        let cfg = BfsConfig::default();
        let mut o = obs(&cfg);
        o.points.push([1.0, 0.5]);
        o.u.push(0.0);
        o.points.push([30.0, 1.0]);
        o.u.push(0.0);
        match build_bfs_assimilation(&cfg, &o, 0) {
            Err(Error::ObservationsOutside { indices }) => assert_eq!(indices, vec![88, 89]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn data_from_the_network_itself_fits_exactly() {
        let cfg = BfsConfig {
            n_interior: 20,
            n_wall: 20,
            ..BfsConfig::default()
        };
        let c = build_bfs_assimilation(&cfg, &obs(&cfg), 0).unwrap();
        let theta = c.problem.initial_theta(5);
        let f: NetworkField = c.problem.network_field(&theta.0, 0).unwrap();
        let o = generate_synthetic_observations(&f, 0, &cfg, &cfg.sections, 22, 0.0, 1).unwrap();
        let c = build_bfs_assimilation(&cfg, &o, 0).unwrap();
        let e = evaluate(&c.problem, &theta.0, false).unwrap();
        assert_eq!(e.terms[2], 0.0);
    }

    #[test]
    fn csv_round_trip_with_comments() {
        let o = obs(&BfsConfig::default());
        let text = format!("# synthetic\n{}\n# end\n", o.to_csv());
        let back = Observations::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, o);
        assert!(Observations::read_csv("x,y,V\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        match Observations::load_csv(Path::new("/nonexistent/obs.csv")) {
            Err(Error::MissingObservations(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_is_seeded() {
        let cfg = BfsConfig::default();
        let truth = crate::autodiff::AnalyticField::<2>::new(1, |x| vec![x[1] * 0.1]);
        let a = generate_synthetic_observations(&truth, 0, &cfg, &cfg.sections, 22, 0.01, 3).unwrap();
        let b = generate_synthetic_observations(&truth, 0, &cfg, &cfg.sections, 22, 0.01, 3).unwrap();
        let clean = generate_synthetic_observations(&truth, 0, &cfg, &cfg.sections, 22, 0.0, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, clean);
        assert!(clean.points.iter().zip(&clean.u).all(|(p, u)| *u == p[1] * 0.1));
    }
}
