//! Collocation sets: interior Latin hypercubes, boundary segments, interface
//! samplings, parameter tensors and observation locations.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SetTag {
    Interior,
    Boundary(String),
    Interface(String),
    Data,
}

impl fmt::Display for SetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetTag::Interior => f.write_str("interior"),
            SetTag::Boundary(n) => write!(f, "boundary:{n}"),
            SetTag::Interface(n) => write!(f, "interface:{n}"),
            SetTag::Data => f.write_str("data"),
        }
    }
}

impl FromStr for SetTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "interior" => Ok(SetTag::Interior),
            None if s == "data" => Ok(SetTag::Data),
            Some(("boundary", n)) => Ok(SetTag::Boundary(n.to_string())),
            Some(("interface", n)) => Ok(SetTag::Interface(n.to_string())),
            _ => Err(Error::parse("sampling tag", format!("unknown tag `{s}`"))),
        }
    }
}

/// A tagged collection of points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSet {
    coords: Vec<f64>,
    dim: usize,
    pub tag: SetTag,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    /// Outward unit normal per point, for boundary and interface sets.
    normals: Option<Vec<[f64; 2]>>,
}

impl SamplingSet {
    pub fn from_points(points: &[Vec<f64>], tag: SetTag) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::contract("points of a sampling set must share one dimension"));
        }
        let coords: Vec<f64> = points.iter().flatten().copied().collect();
        let bounds = bounding_box(&coords, dim);
        Ok(Self {
            coords,
            dim,
            tag,
            bounds,
            seed: 0,
            normals: None,
        })
    }

    pub fn from_flat(coords: Vec<f64>, dim: usize, tag: SetTag, bounds: Vec<(f64, f64)>, seed: u64) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 || bounds.len() != dim {
            return Err(Error::contract("flat coordinates do not match the stated dimension"));
        }
        Ok(Self {
            coords,
            dim,
            tag,
            bounds,
            seed,
            normals: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<[f64; 2]>) -> Result<Self> {
        if normals.len() != self.len() {
            return Err(Error::contract("one normal per point is required"));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    /// Same normal at every point.
    pub fn with_constant_normal(self, n: [f64; 2]) -> Self {
        let len = self.len();
        Self {
            normals: Some(vec![n; len]),
            ..self
        }
    }

    pub fn with_tag(mut self, tag: SetTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn normals(&self) -> Option<&[[f64; 2]]> {
        self.normals.as_deref()
    }

    pub fn normal(&self, i: usize) -> Option<[f64; 2]> {
        self.normals.as_ref().map(|n| n[i])
    }

    /// Keeps the points for which `keep` holds.
    pub fn filter(&self, keep: impl Fn(&[f64]) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.point(i))).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            coords,
            dim: self.dim,
            tag: self.tag.clone(),
            bounds: self.bounds.clone(),
            seed: self.seed,
            normals: self.normals.as_ref().map(|n| idx.iter().map(|&i| n[i]).collect()),
        }
    }

    /// Concatenates sets of equal dimension; the tag is taken from `tag`.
    pub fn concat(parts: &[&SamplingSet], tag: SetTag) -> Result<Self> {
        let dim = parts.first().map(|p| p.dim).ok_or_else(|| Error::contract("nothing to concatenate"))?;
        if parts.iter().any(|p| p.dim != dim) {
            return Err(Error::contract("concatenated sets must share their dimension"));
        }
        let with_normals = parts.iter().all(|p| p.normals.is_some());
        let mut coords = Vec::new();
        let mut normals = Vec::new();
        let mut bounds = parts[0].bounds.clone();
        for p in parts {
            coords.extend_from_slice(&p.coords);
            if let Some(n) = &p.normals {
                normals.extend_from_slice(n);
            }
            for (b, q) in bounds.iter_mut().zip(&p.bounds) {
                b.0 = b.0.min(q.0);
                b.1 = b.1.max(q.1);
            }
        }
        Ok(Self {
            coords,
            dim,
            tag,
            bounds,
            seed: parts[0].seed,
            normals: with_normals.then_some(normals),
        })
    }

    /// Writes `dim0,dim1,...,tag` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|k| format!("dim{k}")).collect();
        writeln!(w, "{},tag", header.join(","))?;
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{},{}", row.join(","), self.tag)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Reads a file written by [`SamplingSet::write_csv`]. Bounds become the
    /// bounding box of the points; normals are not stored in the CSV.
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse("sampling csv", "empty file"))??;
        let dim = header.split(',').count() - 1;
        let mut coords = Vec::new();
        let mut tag = None;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::parse("sampling csv", format!("row {} has {} fields", i + 1, fields.len())));
            }
            for f in &fields[..dim] {
                coords.push(f.parse::<f64>().map_err(|e| Error::parse("sampling csv", e.to_string()))?);
            }
            let t: SetTag = fields[dim].parse()?;
            match &tag {
                None => tag = Some(t),
                Some(prev) if *prev != t => return Err(Error::parse("sampling csv", "mixed tags")),
                _ => {}
            }
        }
        let bounds = bounding_box(&coords, dim);
        Ok(Self {
            coords,
            dim,
            tag: tag.unwrap_or(SetTag::Interior),
            bounds,
            seed: 0,
            normals: None,
        })
    }
}

fn bounding_box(coords: &[f64], dim: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for p in coords.chunks_exact(dim.max(1)) {
        for (bk, &v) in b.iter_mut().zip(p) {
            bk.0 = bk.0.min(v);
            bk.1 = bk.1.max(v);
        }
    }
    b
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::contract("at least one dimension is required"));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::contract(format!("degenerate bounds [{lo}, {hi}] in dimension {k}")));
        }
    }
    Ok(())
}

/// `n` points such that each of the `n` equal strata of every dimension holds
/// exactly one point.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<SamplingSet> {
    if n == 0 {
        return Err(Error::contract("latin hypercube needs n >= 1"));
    }
    check_bounds(bounds)?;
    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = vec![0.0; n * dim];
    let mut perm: Vec<usize> = (0..n).collect();
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        perm.shuffle(&mut rng);
        let w = (hi - lo) / n as f64;
        for (i, &s) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            // clamp guards against lo + n·w rounding past hi
            coords[i * dim + k] = (lo + (s as f64 + u) * w).min(hi);
        }
    }
    SamplingSet::from_flat(coords, dim, SetTag::Interior, bounds.to_vec(), seed)
}

/// Latin hypercube on a bounding box with the points for which `reject` holds
/// discarded. Further hypercubes are drawn with incremented seeds until `n`
/// points survive; the result is truncated to exactly `n`.
pub fn latin_hypercube_rejecting(
    n: usize,
    bounds: &[(f64, f64)],
    seed: u64,
    reject: impl Fn(&[f64]) -> bool,
) -> Result<SamplingSet> {
    check_bounds(bounds)?;
    let dim = bounds.len();
    let mut coords = Vec::with_capacity(n * dim);
    let mut s = seed;
    let mut missing = n;
    let mut rounds = 0;
    while missing > 0 {
        let draw = latin_hypercube(missing.max(1), bounds, s)?;
        for p in draw.points() {
            if missing > 0 && !reject(p) {
                coords.extend_from_slice(p);
                missing -= 1;
            }
        }
        s = s.wrapping_add(1);
        rounds += 1;
        if rounds > 10_000 {
            return Err(Error::contract("rejection region covers (almost) the whole box"));
        }
    }
    SamplingSet::from_flat(coords, dim, SetTag::Interior, bounds.to_vec(), seed)
}

/// Named straight segment from `a` to `b` with its outward unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub normal: [f64; 2],
}

impl Segment {
    pub fn new(name: impl Into<String>, a: [f64; 2], b: [f64; 2], normal: [f64; 2]) -> Self {
        Self {
            name: name.into(),
            a,
            b,
            normal,
        }
    }

    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        [self.a[0] + t * (self.b[0] - self.a[0]), self.a[1] + t * (self.b[1] - self.a[1])]
    }

    /// Distance from `p` to the segment.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let (dx, dy) = (self.b[0] - self.a[0], self.b[1] - self.a[1]);
        let l2 = dx * dx + dy * dy;
        let t = (((p[0] - self.a[0]) * dx + (p[1] - self.a[1]) * dy) / l2).clamp(0.0, 1.0);
        let q = self.at(t);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    UniformRandom,
    Equispaced,
}

/// `n` points on a segment, carrying the segment normal.
pub fn boundary_sample(segment: &Segment, n: usize, mode: BoundaryMode, seed: u64) -> Result<SamplingSet> {
    if segment.length() == 0.0 || !segment.length().is_finite() {
        return Err(Error::contract(format!("segment `{}` has zero length", segment.name)));
    }
    let ts: Vec<f64> = match mode {
        BoundaryMode::Equispaced => {
            if n < 2 {
                return Err(Error::contract("equispaced boundary sampling needs n >= 2"));
            }
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        }
        BoundaryMode::UniformRandom => {
            if n == 0 {
                return Err(Error::contract("boundary sampling needs n >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random::<f64>()).collect()
        }
    };
    let mut coords = Vec::with_capacity(2 * n);
    for t in ts {
        let p = if t == 1.0 { segment.b } else { segment.at(t) };
        coords.extend_from_slice(&p);
    }
    let bounds = vec![
        (segment.a[0].min(segment.b[0]), segment.a[0].max(segment.b[0])),
        (segment.a[1].min(segment.b[1]), segment.a[1].max(segment.b[1])),
    ];
    Ok(
        SamplingSet::from_flat(coords, 2, SetTag::Boundary(segment.name.clone()), bounds, seed)?
            .with_constant_normal(segment.normal),
    )
}

/// Extends every spatial point by every combination of parameter values,
/// spatial-major (all combinations of the first point come first; the last
/// parameter varies fastest).
pub fn tensor_with_parameters(spatial: &SamplingSet, grids: &[Vec<f64>]) -> Result<SamplingSet> {
    if grids.iter().any(|g| g.is_empty()) {
        return Err(Error::contract("parameter lists must be non-empty"));
    }
    let combos: usize = grids.iter().map(|g| g.len()).product();
    let dim = spatial.dim + grids.len();
    let mut coords = Vec::with_capacity(spatial.len() * combos * dim);
    let mut normals = spatial.normals.as_ref().map(|_| Vec::with_capacity(spatial.len() * combos));
    let mut idx = vec![0usize; grids.len()];
    for (i, p) in spatial.points().enumerate() {
        idx.iter_mut().for_each(|v| *v = 0);
        for _ in 0..combos {
            coords.extend_from_slice(p);
            for (g, &j) in grids.iter().zip(&idx) {
                coords.push(g[j]);
            }
            if let (Some(out), Some(src)) = (normals.as_mut(), spatial.normals.as_ref()) {
                out.push(src[i]);
            }
            for k in (0..grids.len()).rev() {
                idx[k] += 1;
                if idx[k] < grids[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
    let mut bounds = spatial.bounds.clone();
    for g in grids {
        let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        bounds.push((lo, hi));
    }
    Ok(SamplingSet {
        coords,
        dim,
        tag: spatial.tag.clone(),
        bounds,
        seed: spatial.seed,
        normals,
    })
}

/// `n` equidistributed values over `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Cartesian `nx × ny` node grid over a rectangle, row-major in y then x
/// (x varies fastest). A 1-node axis sits at the midpoint.
pub fn grid_nodes(nx: usize, ny: usize, bounds: [(f64, f64); 2]) -> Result<SamplingSet> {
    if nx == 0 || ny == 0 {
        return Err(Error::contract("grid needs at least one node per axis"));
    }
    let axis = |n: usize, (lo, hi): (f64, f64)| {
        if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            linspace(lo, hi, n)
        }
    };
    let xs = axis(nx, bounds[0]);
    let ys = axis(ny, bounds[1]);
    let mut coords = Vec::with_capacity(2 * nx * ny);
    for &y in &ys {
        for &x in &xs {
            coords.push(x);
            coords.push(y);
        }
    }
    SamplingSet::from_flat(coords, 2, SetTag::Interior, bounds.to_vec(), 0)
}
