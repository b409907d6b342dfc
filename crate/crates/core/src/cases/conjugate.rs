//! Conjugate heat transfer: a heated solid below a channel flow, one network
//! per domain, coupled through temperature and flux continuity.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_positive, polyline_sample, substream, Case, NetworkConfig};
use crate::error::{Error, Result};
use crate::loss::{bind, LossTerm, NetworkSlot, Target, TrainingProblem};
use crate::network::InputMap;
use crate::optim::{LineSearchKind, Phase, Schedule};
use crate::physics::{FluidCoefficients, Heat, NavierStokes, SolidCoefficients};
use crate::sampling::{latin_hypercube, SamplingSet, Segment, SetTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConjugateConfig {
    /// Fluid channel `[0, length] × [0, height]`.
    pub length: f64,
    pub height: f64,
    /// Solid `[solid_x0, length] × [−solid_depth, 0]`; its top is the interface.
    pub solid_x0: f64,
    pub solid_depth: f64,
    pub u_in: f64,
    pub t_in: f64,
    pub t_hot: f64,
    pub rho: f64,
    pub mu: f64,
    pub kf: f64,
    pub cp: f64,
    pub ks: f64,
    pub fluid_network: NetworkConfig,
    pub solid_network: NetworkConfig,
    pub n_fluid: usize,
    pub n_solid: usize,
    /// Points on each boundary part.
    pub n_boundary: usize,
    pub n_interface: usize,
    /// Velocities pinned to zero and the fluid reduced to the slab above the
    /// solid, with `t_in` imposed on its top: a one-dimensional two-slab
    /// conduction problem.
    pub conduction_only: bool,
    /// Extra fluid collocation points in `[x0 − r, x0 + r] × [0, r]` around
    /// the corner where the interface starts (`r = corner_size`).
    pub corner_points: usize,
    pub corner_size: f64,
}

impl Default for ConjugateConfig {
    fn default() -> Self {
        Self {
            length: 2.0,
            height: 0.5,
            solid_x0: 1.0,
            solid_depth: 0.5,
            u_in: 1.0,
            t_in: 0.2,
            t_hot: 1.0,
            rho: 1.0,
            mu: 0.01,
            kf: 0.025,
            cp: 1.0,
            ks: 1.0,
            fluid_network: NetworkConfig::new(&[50, 50, 50]),
            solid_network: NetworkConfig::new(&[20, 20, 20]),
            n_fluid: 1600,
            n_solid: 225,
            n_boundary: 100,
            n_interface: 50,
            conduction_only: false,
            corner_points: 0,
            corner_size: 0.1,
        }
    }
}

impl ConjugateConfig {
    pub fn default_schedule() -> Schedule {
        Schedule {
            phases: vec![Phase::adam(50_000, 1e-3), Phase::bfgs(2000, LineSearchKind::Armijo)],
        }
    }

    pub fn two_slab() -> Self {
        Self {
            conduction_only: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("length", self.length),
            ("height", self.height),
            ("solid_depth", self.solid_depth),
            ("rho", self.rho),
            ("cp", self.cp),
            ("kf", self.kf),
            ("ks", self.ks),
        ] {
            check_positive(k, v)?;
        }
        if !(self.solid_x0 >= 0.0 && self.solid_x0 < self.length) {
            return Err(Error::config("solid_x0", "must lie inside [0, length)"));
        }
        if !(self.corner_size > 0.0) {
            return Err(Error::config("corner_size", "must be positive"));
        }
        if self.mu < 0.0 {
            return Err(Error::config("mu", "must be non-negative"));
        }
        for (k, n) in [("n_fluid", self.n_fluid), ("n_solid", self.n_solid), ("n_boundary", self.n_boundary), ("n_interface", self.n_interface)] {
            if n == 0 {
                return Err(Error::config(k, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn fluid(&self) -> FluidCoefficients {
        FluidCoefficients {
            rho: self.rho,
            mu: self.mu,
            beta: 0.0,
            g: 0.0,
            kf: self.kf,
            cp: self.cp,
        }
    }

    /// Fluid region as `[(x0, x1), (y0, y1)]`.
    pub fn fluid_box(&self) -> [(f64, f64); 2] {
        let x0 = if self.conduction_only { self.solid_x0 } else { 0.0 };
        [(x0, self.length), (0.0, self.height)]
    }

    pub fn solid_box(&self) -> [(f64, f64); 2] {
        [(self.solid_x0, self.length), (-self.solid_depth, 0.0)]
    }

    /// Interface temperature of the one-dimensional two-slab solution.
    pub fn slab_interface_temperature(&self) -> f64 {
        let (gf, gs) = (self.kf / self.height, self.ks / self.solid_depth);
        (gf * self.t_in + gs * self.t_hot) / (gf + gs)
    }

    /// Inlet profile `4 u_in y (H − y) / H²`.
    pub fn inlet_profile(&self) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
        let (u, h) = (self.u_in, self.height);
        move |p: &[f64]| 4.0 * u * p[1] * (h - p[1]) / (h * h)
    }
}

/// Fluid network `(x, y) → (u, v, T, p)` and solid network `(x, y) → T`
/// trained together on one θ.
///
/// Fluid terms: `L_NS`, `L_W`, `L_u_in`, `L_q`, `L_T_in`, `L_A_f`. Solid
/// terms: `L_HT`, `L_hot`, `L_A_s`. Coupling: `L_c1` (temperature) and
/// `L_c2` (flux). The conduction-only variant replaces the inlet and outlet
/// terms by `L_pin` (u = v = 0 over the fluid) and imposes `t_in` on the
/// fluid top.
pub fn build_conjugate_heat(cfg: &ConjugateConfig, seed: u64) -> Result<Case> {
    cfg.validate()?;
    let (l, h, xs, d) = (cfg.length, cfg.height, cfg.solid_x0, cfg.solid_depth);
    let fbox = cfg.fluid_box();
    let sbox = cfg.solid_box();
    let x0 = fbox[0].0;

    let fluid = NetworkSlot::new("fluid", cfg.fluid_network.spec(2, 4)?, InputMap::to_unit_box(&fbox));
    let solid = NetworkSlot::new("solid", cfg.solid_network.spec(2, 1)?, InputMap::to_unit_box(&sbox));
    let (u, v, tf, p, ts) = (bind(0, 0), bind(0, 1), bind(0, 2), bind(0, 3), bind(1, 0));

    let nb = cfg.n_boundary;
    let seg = |name: &str, a: [f64; 2], b: [f64; 2], n: [f64; 2]| Segment::new(name, a, b, n);
    let sample = |name: &str, segs: &[Segment], k: u64| polyline_sample(name, segs, nb, substream(seed, k)).map(Arc::new);

    let mut fluid_pts = latin_hypercube(cfg.n_fluid, &fbox, substream(seed, 0))?;
    if cfg.corner_points > 0 && !cfg.conduction_only {
        let r = cfg.corner_size;
        let corner = latin_hypercube(cfg.corner_points, &[((xs - r).max(0.0), (xs + r).min(l)), (0.0, r.min(h))], substream(seed, 9))?;
        fluid_pts = SamplingSet::concat(&[&fluid_pts, &corner], SetTag::Interior)?;
    }
    let fluid_pts = Arc::new(fluid_pts);
    let solid_pts = Arc::new(latin_hypercube(cfg.n_solid, &sbox, substream(seed, 1))?);
    let iface = Arc::new(
        polyline_sample("interface", &[seg("interface", [xs, 0.0], [l, 0.0], [0.0, -1.0])], cfg.n_interface, substream(seed, 2))?
            .with_tag(SetTag::Interface("interface".into())),
    );
    let top = seg("top", [x0, h], [l, h], [0.0, 1.0]);
    let upstream = seg("upstream", [0.0, 0.0], [xs, 0.0], [0.0, -1.0]);
    let hot = sample("hot", &[seg("hot", [xs, -d], [l, -d], [0.0, -1.0])], 3)?;
    let solid_sides = sample(
        "solid_sides",
        &[seg("solid_left", [xs, -d], [xs, 0.0], [-1.0, 0.0]), seg("solid_right", [l, -d], [l, 0.0], [1.0, 0.0])],
        4,
    )?;

    let ns = Arc::new(NavierStokes::thermal(cfg.fluid()));
    let mut terms = vec![LossTerm::pde("L_NS", fluid_pts.clone(), vec![u, v, tf, p], ns)];
    let mut samplings = vec![("fluid_interior".to_string(), fluid_pts.clone()), ("solid_interior".to_string(), solid_pts.clone())];

    if cfg.conduction_only {
        let top_pts = sample("top", &[top], 5)?;
        let sides = sample(
            "fluid_sides",
            &[seg("fluid_left", [x0, 0.0], [x0, h], [-1.0, 0.0]), seg("fluid_right", [l, 0.0], [l, h], [1.0, 0.0])],
            6,
        )?;
        let all = Arc::new(SamplingSet::concat(&[&*fluid_pts, &*top_pts, &*sides, &*iface], SetTag::Interior)?);
        terms.push(LossTerm::dirichlet("L_pin", all, vec![u, v], vec![0.0.into(), 0.0.into()]));
        terms.push(LossTerm::dirichlet("L_T_in", top_pts.clone(), vec![tf], vec![cfg.t_in.into()]));
        terms.push(LossTerm::neumann("L_A_f", sides.clone(), tf, 0.0.into()));
        samplings.push(("fluid_top".into(), top_pts));
        samplings.push(("fluid_sides".into(), sides));
    } else {
        let walls = sample(
            "walls",
            &[top.clone(), upstream.clone(), seg("interface", [xs, 0.0], [l, 0.0], [0.0, -1.0])],
            5,
        )?;
        let adiabatic = sample("adiabatic", &[top, upstream], 6)?;
        let inlet = sample("inlet", &[seg("inlet", [0.0, 0.0], [0.0, h], [-1.0, 0.0])], 7)?;
        let outlet = sample("outlet", &[seg("outlet", [l, 0.0], [l, h], [1.0, 0.0])], 8)?;
        terms.push(LossTerm::dirichlet("L_W", walls.clone(), vec![u, v], vec![0.0.into(), 0.0.into()]));
        terms.push(LossTerm::dirichlet("L_u_in", inlet.clone(), vec![u], vec![Target::function(cfg.inlet_profile())]));
        // mean outlet velocity of the parabolic profile: (2/3) u_in
        terms.push(LossTerm::mean_value("L_q", outlet.clone(), u, 2.0 / 3.0 * cfg.u_in));
        terms.push(LossTerm::dirichlet("L_T_in", inlet.clone(), vec![tf], vec![cfg.t_in.into()]));
        terms.push(LossTerm::neumann("L_A_f", adiabatic.clone(), tf, 0.0.into()));
        samplings.push(("fluid_walls".into(), walls));
        samplings.push(("fluid_adiabatic".into(), adiabatic));
        samplings.push(("inlet".into(), inlet));
        samplings.push(("outlet".into(), outlet));
    }

    let heat = Arc::new(Heat::new(SolidCoefficients::new(cfg.ks)?));
    terms.push(LossTerm::pde("L_HT", solid_pts, vec![ts], heat));
    terms.push(LossTerm::dirichlet("L_hot", hot.clone(), vec![ts], vec![cfg.t_hot.into()]));
    terms.push(LossTerm::neumann("L_A_s", solid_sides.clone(), ts, 0.0.into()));
    terms.push(LossTerm::interface_value("L_c1", iface.clone(), tf, ts));
    terms.push(LossTerm::interface_flux("L_c2", iface.clone(), tf, ts, cfg.kf, cfg.ks, [0.0, -1.0]));
    samplings.push(("hot".into(), hot));
    samplings.push(("solid_sides".into(), solid_sides));
    samplings.push(("interface".into(), iface));

    Ok(Case {
        problem: TrainingProblem::new(vec![fluid, solid], vec![], terms)?,
        samplings,
        warnings: Vec::new(),
    })
}
