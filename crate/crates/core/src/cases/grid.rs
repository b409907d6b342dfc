//! Network predictions on Cartesian node grids.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::autodiff::DifferentiableField;
use crate::error::{Error, Result};
use crate::sampling::grid_nodes;

/// Channel values on an `nx × ny` grid, row-major with x fastest. Nodes
/// outside the domain hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub channels: Vec<String>,
    pub points: Vec<[f64; 2]>,
    /// `values[node * channels.len() + c]`
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        let k = self.channels.len();
        (0..self.len()).map(|i| self.values[i * k + c]).collect()
    }

    pub fn value(&self, node: usize, c: usize) -> f64 {
        self.values[node * self.channels.len() + c]
    }

    /// Mean squared difference of one channel over nodes where both grids
    /// are defined.
    pub fn mse(&self, other: &FieldGrid, c: usize, other_c: usize) -> Result<f64> {
        if self.points != other.points {
            return Err(Error::contract("grids have different nodes"));
        }
        let (mut s, mut n) = (0.0, 0usize);
        for i in 0..self.len() {
            let (a, b) = (self.value(i, c), other.value(i, other_c));
            if a.is_finite() && b.is_finite() {
                s += (a - b) * (a - b);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::contract("no node is defined on both grids"));
        }
        Ok(s / n as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y");
        for c in &self.channels {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        let k = self.channels.len();
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(s, "{},{}", p[0], p[1]);
            for v in &self.values[i * k..(i + 1) * k] {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let err = |m: String| Error::parse("field grid", m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or_else(|| err("empty file".into()))?.split(',').collect();
        if header.len() < 2 || header[0] != "x" || header[1] != "y" {
            return Err(err(format!("header must start with x,y: {header:?}")));
        }
        let channels: Vec<String> = header[2..].iter().map(|s| s.trim().to_string()).collect();
        let mut points = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines.enumerate() {
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("row {k}: {e}")))?;
            if f.len() != header.len() {
                return Err(err(format!("row {k} has {} fields", f.len())));
            }
            points.push([f[0], f[1]]);
            values.extend_from_slice(&f[2..]);
        }
        let xs: BTreeSet<u64> = points.iter().map(|p| p[0].to_bits()).collect();
        let ys: BTreeSet<u64> = points.iter().map(|p| p[1].to_bits()).collect();
        let (nx, ny) = (xs.len(), ys.len());
        if nx * ny != points.len() {
            return Err(err(format!("{} rows do not form a {nx} × {ny} grid", points.len())));
        }
        Ok(Self {
            nx,
            ny,
            channels,
            points,
            values,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }
}

/// Grid over a rectangle; extra inputs (frozen parameters) are appended to
/// every node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub bounds: [(f64, f64); 2],
    pub parameters: Vec<f64>,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, bounds: [(f64, f64); 2]) -> Self {
        Self {
            nx,
            ny,
            bounds,
            parameters: Vec::new(),
        }
    }

    pub fn with_parameters(mut self, p: Vec<f64>) -> Self {
        self.parameters = p;
        self
    }
}

/// Evaluates `field` on every grid node inside the domain. Channels listed
/// in `gauge` (pressures) are returned with their mean over the defined
/// nodes subtracted.
pub fn predict_grid(
    field: &dyn DifferentiableField,
    names: &[&str],
    gauge: &[usize],
    spec: &GridSpec,
    inside: &(dyn Fn(f64, f64) -> bool + Sync),
) -> Result<FieldGrid> {
    let k = field.output_dim();
    if names.len() != k {
        return Err(Error::contract(format!("{} channel names for {k} outputs", names.len())));
    }
    if field.input_dim() != 2 + spec.parameters.len() {
        return Err(Error::contract("grid parameters do not match the field inputs"));
    }
    let nodes = grid_nodes(spec.nx, spec.ny, spec.bounds)?;
    let points: Vec<[f64; 2]> = nodes.points().map(|p| [p[0], p[1]]).collect();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p| {
            if !inside(p[0], p[1]) {
                return Ok(vec![f64::NAN; k]);
            }
            let mut x = p.to_vec();
            x.extend_from_slice(&spec.parameters);
            field.values(&x)
        })
        .collect::<Result<_>>()?;
    let mut values: Vec<f64> = rows.into_iter().flatten().collect();
    for &c in gauge {
        let defined: Vec<f64> = (0..points.len()).map(|i| values[i * k + c]).filter(|v| v.is_finite()).collect();
        if defined.is_empty() {
            continue;
        }
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        for i in 0..points.len() {
            values[i * k + c] -= mean;
        }
    }
    Ok(FieldGrid {
        nx: spec.nx,
        ny: spec.ny,
        channels: names.iter().map(|s| s.to_string()).collect(),
        points,
        values,
    })
}
