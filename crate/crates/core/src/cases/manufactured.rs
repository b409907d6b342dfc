//! Manufactured problems with known answers: a forced Navier-Stokes/energy
//! system on the unit square, a RANS twin of the step assimilation with a
//! prescribed eddy viscosity, and a Poisson problem with an unknown
//! coefficient.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bfs::{assemble, BfsConfig, Observations};
use super::{check_positive, polyline_sample, substream, Case, NetworkConfig};
use crate::autodiff::{AnalyticField, DifferentiableField, TaylorJet};
use crate::error::{Error, Result};
use crate::loss::{bind, ExtraParam, LossTerm, NetworkSlot, Target, TrainingProblem};
use crate::network::InputMap;
use crate::optim::{LineSearchKind, Phase, Schedule};
use crate::physics::{manufactured_forcing, FluidCoefficients, Heat, NavierStokes, Rans};
use crate::sampling::{latin_hypercube, SamplingSet, Segment};

type J = TaylorJet<2>;

const UNIT: [(f64, f64); 2] = [(0.0, 1.0), (0.0, 1.0)];

fn unit_square_sides() -> Vec<Segment> {
    vec![
        Segment::new("bottom", [0.0, 0.0], [1.0, 0.0], [0.0, -1.0]),
        Segment::new("right", [1.0, 0.0], [1.0, 1.0], [1.0, 0.0]),
        Segment::new("top", [1.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
        Segment::new("left", [0.0, 1.0], [0.0, 0.0], [-1.0, 0.0]),
    ]
}

fn values_at(field: &dyn DifferentiableField, points: &SamplingSet, channel: usize) -> Result<Vec<f64>> {
    points.points().map(|p| Ok(field.values(p)?[channel])).collect()
}

/// Navier-Stokes with buoyancy and energy on `[0, 1]²`, forced so that
/// `u = sin πx cos πy`, `v = −cos πx sin πy`, `T = cos πx cos πy`,
/// `p = (cos 2πx + cos 2πy)/4` is the exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcedNsConfig {
    pub mu: f64,
    pub kf: f64,
    pub rho: f64,
    pub beta: f64,
    pub g: f64,
    pub cp: f64,
    pub network: NetworkConfig,
    pub n_interior: usize,
    /// Points on the whole boundary.
    pub n_boundary: usize,
}

impl Default for ForcedNsConfig {
    fn default() -> Self {
        Self {
            mu: 0.05,
            kf: 0.05,
            rho: 1.0,
            beta: 0.1,
            g: 1.0,
            cp: 1.0,
            network: NetworkConfig::new(&[30, 30, 30]),
            n_interior: 1000,
            n_boundary: 400,
        }
    }
}

impl ForcedNsConfig {
    pub fn default_schedule() -> Schedule {
        Schedule {
            phases: vec![Phase::adam(2000, 1e-3), Phase::bfgs(2000, LineSearchKind::Armijo)],
        }
    }

    pub fn coefficients(&self) -> Result<FluidCoefficients> {
        FluidCoefficients::new(self.rho, self.mu, self.beta, self.g, self.kf, self.cp).map_err(|e| Error::config("mu", e.to_string()))
    }

    /// Channels `(u, v, T, p)`.
    pub fn reference() -> AnalyticField<2> {
        AnalyticField::new(4, |x: &[J; 2]| {
            let (px, py) = (x[0] * PI, x[1] * PI);
            vec![
                px.sin() * py.cos(),
                -(px.cos() * py.sin()),
                px.cos() * py.cos(),
                ((px * 2.0).cos() + (py * 2.0).cos()) * 0.25,
            ]
        })
    }
}

/// Terms `L_NS` (forced), `L_BC` (u, v, T on the boundary).
pub fn build_forced_ns(cfg: &ForcedNsConfig, seed: u64) -> Result<Case> {
    if cfg.n_interior == 0 || cfg.n_boundary == 0 {
        return Err(Error::config("n_interior", "point counts must be at least 1"));
    }
    let truth: Arc<dyn DifferentiableField> = Arc::new(ForcedNsConfig::reference());
    let op = manufactured_forcing(NavierStokes::buoyancy(cfg.coefficients()?), truth.clone(), vec![])?;
    let net = NetworkSlot::new("fluid", cfg.network.spec(2, 4)?, InputMap::to_unit_box(&UNIT));
    let interior = Arc::new(latin_hypercube(cfg.n_interior, &UNIT, substream(seed, 0))?);
    let boundary = Arc::new(polyline_sample("boundary", &unit_square_sides(), cfg.n_boundary, substream(seed, 1))?);
    let targets: Vec<Target> = (0..3)
        .map(|c| values_at(truth.as_ref(), &boundary, c).map(|v| Target::PerPoint(Arc::new(v))))
        .collect::<Result<_>>()?;
    let terms = vec![
        LossTerm::pde("L_NS", interior.clone(), vec![bind(0, 0), bind(0, 1), bind(0, 2), bind(0, 3)], Arc::new(op)),
        LossTerm::dirichlet("L_BC", boundary.clone(), vec![bind(0, 0), bind(0, 1), bind(0, 2)], targets),
    ];
    Ok(Case {
        problem: TrainingProblem::new(vec![net], vec![], terms)?,
        samplings: vec![("interior".into(), interior), ("boundary".into(), boundary)],
        warnings: vec![],
    })
}

/// Where the four observed sections sit along the twin channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// `x ∈ {0, 7, 13, 22}`; one section crosses the recirculation.
    #[default]
    Standard,
    /// `x ∈ {0, 10, 13, 22}`; no section inside the recirculation.
    Star,
}

impl Placement {
    pub fn sections(self) -> Vec<f64> {
        match self {
            Placement::Standard => vec![0.0, 7.0, 13.0, 22.0],
            Placement::Star => vec![0.0, 10.0, 13.0, 22.0],
        }
    }
}

/// Straight channel of height `H` carrying a divergence-free flow with a
/// localized near-wall recirculation, from the stream function
/// `ψ = H [2η² − 4η³/3 + a G(x) η²(1−η)²]`, `η = y/H`,
/// `G = exp(−((x − c)/w)²)`. The eddy viscosity is `ν_t = ν̃²` with
/// `ν̃ = s · 4η(1−η) (1 + b G)` and the pressure falls linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansTwinConfig {
    pub channel: BfsConfig,
    pub placement: Placement,
    pub amplitude: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    pub nut_scale: f64,
    pub nut_bump: f64,
    pub pressure_gradient: f64,
}

impl Default for RansTwinConfig {
    fn default() -> Self {
        Self {
            channel: BfsConfig {
                step_height: 0.0,
                step_length: 0.0,
                wall_viscosity: true,
                n_interior: 2000,
                n_wall: 400,
                ..BfsConfig::default()
            },
            placement: Placement::Standard,
            amplitude: -5.0,
            bump_center: 7.0,
            bump_width: 1.0,
            nut_scale: 0.3,
            nut_bump: 2.0,
            pressure_gradient: 0.02,
        }
    }
}

impl RansTwinConfig {
    pub fn default_schedule() -> Schedule {
        Schedule {
            phases: vec![Phase::adam(1000, 1e-3), Phase::bfgs(2000, LineSearchKind::Armijo)],
        }
    }

    pub fn with_placement(mut self, p: Placement) -> Self {
        self.placement = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.channel.step_height != 0.0 {
            return Err(Error::config("channel.step_height", "the twin is a straight channel"));
        }
        check_positive("bump_width", self.bump_width)?;
        check_positive("nut_scale", self.nut_scale)?;
        if !(self.amplitude.is_finite() && self.nut_bump > -1.0 && self.pressure_gradient.is_finite()) {
            return Err(Error::config("amplitude", "twin shape parameters out of range"));
        }
        Ok(())
    }

    /// Channels `(U, V, P̃, ν̃)`.
    pub fn reference(&self) -> AnalyticField<2> {
        let (h, a, c, w, s, b, dp) = (
            self.channel.height,
            self.amplitude,
            self.bump_center,
            self.bump_width,
            self.nut_scale,
            self.nut_bump,
            self.pressure_gradient,
        );
        AnalyticField::new(4, move |x: &[J; 2]| {
            let eta = x[1] * (1.0 / h);
            let one = 1.0 - eta;
            let xi = (x[0] - c) * (1.0 / w);
            let g = (-(xi * xi)).exp();
            let dg = xi * g * (-2.0 / w);
            let u = eta * one * 4.0 + g * eta * one * (1.0 - eta * 2.0) * (2.0 * a);
            let v = dg * eta * eta * one * one * (-h * a);
            let p = x[0] * (-dp);
            let nt = eta * one * (g * b + 1.0) * (4.0 * s);
            vec![u, v, p, nt]
        })
    }

    /// `ν_t` of the reference at a point.
    pub fn reference_nut(&self, point: &[f64]) -> Result<f64> {
        let n = self.reference().values(point)?[3];
        Ok(n * n)
    }
}

/// A twin problem together with its ground truth.
#[derive(Debug)]
pub struct RansTwin {
    pub case: Case,
    pub config: RansTwinConfig,
    pub reference: AnalyticField<2>,
    pub observations: Observations,
}

/// The step assimilation problem on the twin channel: same networks and
/// terms, forcing from the reference, noise-free `U` observations on the
/// sections of the chosen placement.
pub fn build_rans_twin(cfg: &RansTwinConfig, seed: u64) -> Result<RansTwin> {
    cfg.validate()?;
    let reference = cfg.reference();
    let obs = super::generate_synthetic_observations(
        &reference,
        0,
        &cfg.channel,
        &cfg.placement.sections(),
        cfg.channel.n_per_section,
        cfg.channel.noise_sigma,
        substream(seed, 7),
    )?;
    let op = manufactured_forcing(Rans { coeffs: cfg.channel.coefficients() }, Arc::new(reference.clone()), vec![])?;
    let case = assemble(&cfg.channel, &obs, Arc::new(op), seed)?;
    Ok(RansTwin {
        case,
        config: cfg.clone(),
        reference,
        observations: obs,
    })
}

/// `γ Δu = f` on `[0, 1]²` with `u = sin πx sin πy` and unknown `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoissonConfig {
    pub gamma_true: f64,
    pub gamma_initial: f64,
    pub network: NetworkConfig,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_observations: usize,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self {
            gamma_true: 0.5,
            gamma_initial: 1.0,
            network: NetworkConfig::new(&[20, 20]),
            n_interior: 400,
            n_boundary: 100,
            n_observations: 20,
        }
    }
}

impl PoissonConfig {
    pub fn default_schedule() -> Schedule {
        Schedule {
            phases: vec![Phase::adam(500, 1e-2), Phase::bfgs(1000, LineSearchKind::Wolfe)],
        }
    }

    pub fn reference() -> AnalyticField<2> {
        AnalyticField::new(1, |x: &[J; 2]| vec![(x[0] * PI).sin() * (x[1] * PI).sin()])
    }
}

/// Terms `L_PDE` (γ trainable), `L_BC`, `L_data`; the single extra is `gamma`.
pub fn build_poisson_gamma(cfg: &PoissonConfig, seed: u64) -> Result<Case> {
    check_positive("gamma_true", cfg.gamma_true)?;
    if !cfg.gamma_initial.is_finite() {
        return Err(Error::config("gamma_initial", "must be finite"));
    }
    if cfg.n_interior == 0 || cfg.n_boundary == 0 || cfg.n_observations == 0 {
        return Err(Error::config("n_interior", "point counts must be at least 1"));
    }
    let truth: Arc<dyn DifferentiableField> = Arc::new(PoissonConfig::reference());
    let op = manufactured_forcing(Heat::trainable(), truth.clone(), vec![cfg.gamma_true])?;
    let net = NetworkSlot::new("u", cfg.network.spec(2, 1)?, InputMap::to_unit_box(&UNIT));
    let interior = Arc::new(latin_hypercube(cfg.n_interior, &UNIT, substream(seed, 0))?);
    let boundary = Arc::new(polyline_sample("boundary", &unit_square_sides(), cfg.n_boundary, substream(seed, 1))?);
    let data = Arc::new(latin_hypercube(cfg.n_observations, &UNIT, substream(seed, 2))?);
    let observed = values_at(truth.as_ref(), &data, 0)?;
    let terms = vec![
        LossTerm::pde("L_PDE", interior.clone(), vec![bind(0, 0)], Arc::new(op)).with_extras(vec![0]),
        LossTerm::dirichlet("L_BC", boundary.clone(), vec![bind(0, 0)], vec![0.0.into()]),
        LossTerm::data("L_data", data.clone(), bind(0, 0), observed),
    ];
    let extras = vec![ExtraParam {
        name: "gamma".into(),
        initial: cfg.gamma_initial,
    }];
    Ok(Case {
        problem: TrainingProblem::new(vec![net], extras, terms)?,
        samplings: vec![("interior".into(), interior), ("boundary".into(), boundary), ("data".into(), data)],
        warnings: vec![],
    })
}
