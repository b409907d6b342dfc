//! Scenario builders: the parametric heated cavity, the two-network
//! conjugate heat transfer problem, RANS data assimilation over a backward
//! facing step, and manufactured variants with known answers.

pub mod bfs;
pub mod cavity;
pub mod conjugate;
pub mod grid;
pub mod manufactured;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bfs::{build_bfs_assimilation, generate_synthetic_observations, BfsConfig, Observations};
pub use cavity::{build_parametric_cavity, CavityConfig};
pub use conjugate::{build_conjugate_heat, ConjugateConfig};
pub use grid::{predict_grid, FieldGrid, GridSpec};
pub use manufactured::{
    build_forced_ns, build_poisson_gamma, build_rans_twin, ForcedNsConfig, Placement, PoissonConfig, RansTwin,
    RansTwinConfig,
};

use crate::error::{Error, Result};
use crate::loss::TrainingProblem;
use crate::network::{Activation, MlpSpec};
use crate::sampling::{latin_hypercube, SamplingSet, Segment, SetTag};

/// A built scenario: the problem plus every sampling it was assembled from.
#[derive(Debug)]
pub struct Case {
    pub problem: TrainingProblem,
    /// Spatial samplings by file stem, as written by `sample`.
    pub samplings: Vec<(String, Arc<SamplingSet>)>,
    /// Non-fatal notes, e.g. boundaries left empty by a zero count.
    pub warnings: Vec<String>,
}

/// Hidden-layer widths and activation of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "tanh")]
    pub activation: Activation,
}

fn tanh() -> Activation {
    Activation::Tanh
}

impl NetworkConfig {
    pub fn new(hidden: &[usize]) -> Self {
        Self {
            hidden: hidden.to_vec(),
            activation: Activation::Tanh,
        }
    }

    pub fn spec(&self, inputs: usize, outputs: usize) -> Result<MlpSpec> {
        if self.hidden.is_empty() {
            return Err(Error::config("network.hidden", "needs at least one hidden layer"));
        }
        MlpSpec::with_hidden(inputs, &self.hidden, outputs, self.activation)
    }
}

/// Independent stream `k` of a run seed.
pub(crate) fn substream(seed: u64, k: u64) -> u64 {
    seed ^ (k.wrapping_add(1)).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Stratified points along a chain of segments: a one-dimensional Latin
/// hypercube over the total length, so each segment receives points in
/// proportion to its length. Every point carries its segment's normal.
pub fn polyline_sample(name: &str, segments: &[Segment], n: usize, seed: u64) -> Result<SamplingSet> {
    let total: f64 = segments.iter().map(Segment::length).sum();
    if n == 0 || segments.is_empty() || total <= 0.0 {
        return Err(Error::contract(format!("boundary `{name}` needs n >= 1 and a positive length")));
    }
    let s = latin_hypercube(n, &[(0.0, total)], seed)?;
    let mut coords = Vec::with_capacity(2 * n);
    let mut normals = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = s.point(i)[0];
        let mut seg = &segments[segments.len() - 1];
        for g in segments {
            if t <= g.length() {
                seg = g;
                break;
            }
            t -= g.length();
        }
        let p = seg.at((t / seg.length()).clamp(0.0, 1.0));
        coords.extend_from_slice(&p);
        normals.push(seg.normal);
    }
    let bounds = vec![bbox(segments, 0), bbox(segments, 1)];
    SamplingSet::from_flat(coords, 2, SetTag::Boundary(name.into()), bounds, seed)?.with_normals(normals)
}

fn bbox(segments: &[Segment], k: usize) -> (f64, f64) {
    let lo = segments.iter().map(|s| s.a[k].min(s.b[k])).fold(f64::INFINITY, f64::min);
    let hi = segments.iter().map(|s| s.a[k].max(s.b[k])).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `n` equispaced points strictly inside a segment (endpoints excluded).
pub fn open_equispaced(name: &str, segment: &Segment, n: usize) -> Result<SamplingSet> {
    if n == 0 {
        return Err(Error::contract(format!("boundary `{name}` needs n >= 1")));
    }
    let mut coords = Vec::with_capacity(2 * n);
    for i in 0..n {
        coords.extend_from_slice(&segment.at((i + 1) as f64 / (n + 1) as f64));
    }
    let bounds = vec![bbox(std::slice::from_ref(segment), 0), bbox(std::slice::from_ref(segment), 1)];
    Ok(SamplingSet::from_flat(coords, 2, SetTag::Boundary(name.into()), bounds, 0)?.with_constant_normal(segment.normal))
}

pub(crate) fn check_range(key: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::config(key, format!("range must be ordered and finite, got {r:?}")));
    }
    Ok(())
}

pub(crate) fn check_positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::config(key, format!("must be positive, got {v}")));
    }
    Ok(())
}
