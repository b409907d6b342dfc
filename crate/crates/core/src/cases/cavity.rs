//! Differentially heated square cavity, parametric in viscosity and fluid
//! conductivity.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_positive, check_range, open_equispaced, substream, Case, NetworkConfig};
use crate::error::{Error, Result};
use crate::loss::{bind, LossTerm, NetworkSlot, Target, TrainingProblem};
use crate::network::InputMap;
use crate::optim::{LineSearchKind, Phase, Schedule};
use crate::physics::{FluidCoefficients, NavierStokes};
use crate::sampling::{boundary_sample, latin_hypercube, linspace, tensor_with_parameters, BoundaryMode, SamplingSet, Segment, SetTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityConfig {
    /// Side of the square `[0, size]²`.
    pub size: f64,
    pub t_left: f64,
    pub t_right: f64,
    pub mu_range: [f64; 2],
    pub kf_range: [f64; 2],
    pub n_mu: usize,
    pub n_kf: usize,
    pub rho: f64,
    pub beta: f64,
    pub g: f64,
    pub cp: f64,
    pub network: NetworkConfig,
    pub n_interior: usize,
    /// Points per wall.
    pub n_wall: usize,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            size: 2.0,
            t_left: 1.0,
            t_right: -1.0,
            mu_range: [0.01, 0.1],
            kf_range: [0.01, 0.1],
            n_mu: 4,
            n_kf: 4,
            rho: 1.0,
            beta: 0.1,
            g: 1.0,
            cp: 1.0,
            network: NetworkConfig::new(&[50, 50, 50]),
            n_interior: 2500,
            n_wall: 100,
        }
    }
}

impl CavityConfig {
    /// The same setup frozen at one coefficient pair.
    pub fn single(mu: f64, kf: f64) -> Self {
        Self {
            mu_range: [mu, mu],
            kf_range: [kf, kf],
            n_mu: 1,
            n_kf: 1,
            ..Self::default()
        }
    }

    pub fn default_schedule() -> Schedule {
        Schedule {
            phases: vec![Phase::adam(3000, 1e-3), Phase::lbfgs(7000, LineSearchKind::Armijo)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("size", self.size)?;
        check_range("mu_range", self.mu_range)?;
        check_range("kf_range", self.kf_range)?;
        if self.mu_range[0] <= 0.0 || self.kf_range[0] <= 0.0 {
            return Err(Error::config("mu_range", "coefficients must be positive"));
        }
        if self.n_mu == 0 || self.n_kf == 0 {
            return Err(Error::config("n_mu", "parameter grids need at least one value"));
        }
        if self.n_interior == 0 {
            return Err(Error::config("n_interior", "must be at least 1"));
        }
        FluidCoefficients::new(self.rho, self.mu_range[0], self.beta, self.g, self.kf_range[0], self.cp)
            .map_err(|e| Error::config("rho", e.to_string()))?;
        Ok(())
    }

    pub fn coefficients(&self) -> FluidCoefficients {
        FluidCoefficients {
            rho: self.rho,
            mu: self.mu_range[0],
            beta: self.beta,
            g: self.g,
            kf: self.kf_range[0],
            cp: self.cp,
        }
    }

    pub fn mu_grid(&self) -> Vec<f64> {
        grid(self.mu_range, self.n_mu)
    }

    pub fn kf_grid(&self) -> Vec<f64> {
        grid(self.kf_range, self.n_kf)
    }
}

fn grid(r: [f64; 2], n: usize) -> Vec<f64> {
    if r[0] == r[1] {
        vec![r[0]]
    } else {
        linspace(r[0], r[1], n)
    }
}

/// One network with inputs `(x, y, μ, k^f)` and outputs `(u, v, T, p)`.
///
/// Terms: `L_NS` over the spatial sampling crossed with the coefficient
/// grids, `L_W` no-slip on all walls, `L_T` imposed temperature on the
/// lateral walls, `L_A` adiabatic top and bottom. Corner points belong to the
/// lateral walls.
pub fn build_parametric_cavity(cfg: &CavityConfig, seed: u64) -> Result<Case> {
    cfg.validate()?;
    let l = cfg.size;
    let grids = [cfg.mu_grid(), cfg.kf_grid()];
    let spec = cfg.network.spec(4, 4)?;
    let map = InputMap::to_unit_box(&[(0.0, l), (0.0, l), (cfg.mu_range[0], cfg.mu_range[1]), (cfg.kf_range[0], cfg.kf_range[1])]);
    let net = NetworkSlot::new("fluid", spec, map);

    let interior = latin_hypercube(cfg.n_interior, &[(0.0, l), (0.0, l)], substream(seed, 0))?;
    let mut samplings = vec![("interior".to_string(), Arc::new(interior.clone()))];
    let mut warnings = Vec::new();
    let tensor = |s: &SamplingSet| tensor_with_parameters(s, &grids).map(Arc::new);

    let ns = NavierStokes::parametric(cfg.coefficients(), 2, 3);
    let fields = vec![bind(0, 0), bind(0, 1), bind(0, 2), bind(0, 3)];
    let mut terms = vec![LossTerm::pde("L_NS", tensor(&interior)?, fields, Arc::new(ns))];

    let mut lateral = Vec::new();
    let mut adiabatic = Vec::new();
    if cfg.n_wall == 0 {
        warnings.push("n_wall = 0: no wall samplings, L_W, L_T and L_A omitted".to_string());
    } else {
        let left = Segment::new("left", [0.0, 0.0], [0.0, l], [-1.0, 0.0]);
        let right = Segment::new("right", [l, 0.0], [l, l], [1.0, 0.0]);
        let top = Segment::new("top", [0.0, l], [l, l], [0.0, 1.0]);
        let bottom = Segment::new("bottom", [0.0, 0.0], [l, 0.0], [0.0, -1.0]);
        for seg in [&left, &right] {
            let s = if cfg.n_wall >= 2 {
                boundary_sample(seg, cfg.n_wall, BoundaryMode::Equispaced, 0)?
            } else {
                open_equispaced(&seg.name, seg, 1)?
            };
            lateral.push(s);
        }
        for seg in [&top, &bottom] {
            adiabatic.push(open_equispaced(&seg.name, seg, cfg.n_wall)?);
        }
        for s in lateral.iter().chain(&adiabatic) {
            samplings.push((format!("wall_{}", s.tag.to_string().trim_start_matches("boundary:")), Arc::new(s.clone())));
        }
        let walls = SamplingSet::concat(&[&lateral[0], &lateral[1], &adiabatic[0], &adiabatic[1]], SetTag::Boundary("walls".into()))?;
        terms.push(LossTerm::dirichlet("L_W", tensor(&walls)?, vec![bind(0, 0), bind(0, 1)], vec![0.0.into(), 0.0.into()]));

        let heated = SamplingSet::concat(&[&lateral[0], &lateral[1]], SetTag::Boundary("lateral".into()))?;
        let heated = tensor(&heated)?;
        let (tl, tr, half) = (cfg.t_left, cfg.t_right, 0.5 * l);
        let target = Target::function(move |p| if p[0] < half { tl } else { tr });
        terms.push(LossTerm::dirichlet("L_T", heated, vec![bind(0, 2)], vec![target]));

        let ad = SamplingSet::concat(&[&adiabatic[0], &adiabatic[1]], SetTag::Boundary("adiabatic".into()))?;
        terms.push(LossTerm::neumann("L_A", tensor(&ad)?, bind(0, 2), 0.0.into()));
    }

    Ok(Case {
        problem: TrainingProblem::new(vec![net], vec![], terms)?,
        samplings,
        warnings,
    })
}
