use std::sync::Arc;

use super::engine::{self, Order, Workspace};
use super::jet::{Jet2, TaylorJet};
use crate::error::{Error, Result};
use crate::network::{check_len, InputMap, MlpSpec, ParameterVector};

/// Anything that maps a point to one [`Jet2`] per output channel.
///
/// Implementations must be pure: the same point always yields bit-identical jets.
pub trait DifferentiableField: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn jets(&self, point: &[f64]) -> Result<Vec<Jet2>>;

    fn values(&self, point: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jets(point)?.into_iter().map(|j| j.value).collect())
    }
}

/// A network with its input normalization, viewed as a field.
#[derive(Debug, Clone)]
pub struct NetworkField {
    pub spec: MlpSpec,
    pub params: ParameterVector,
    pub map: InputMap,
}

impl NetworkField {
    pub fn new(spec: MlpSpec, params: ParameterVector, map: InputMap) -> Result<Self> {
        check_len(&spec, params.as_slice())?;
        if map.dim() != spec.input_dim() {
            return Err(Error::contract(format!(
                "input map has {} coordinates, network expects {}",
                map.dim(),
                spec.input_dim()
            )));
        }
        Ok(Self { spec, params, map })
    }

    /// Raw network (identity input map).
    pub fn plain(spec: MlpSpec, params: ParameterVector) -> Result<Self> {
        let map = InputMap::identity(spec.input_dim());
        Self::new(spec, params, map)
    }

    pub fn forward(&self, point: &[f64]) -> Result<Vec<f64>> {
        crate::network::forward_mapped(&self.spec, self.params.as_slice(), &self.map, point)
    }

    /// Jets with derivatives only for the first `n_deriv` inputs.
    pub fn jets_partial(&self, point: &[f64], n_deriv: usize) -> Result<Vec<Jet2>> {
        let d = self.spec.input_dim();
        if point.len() != d {
            return Err(Error::contract(format!(
                "point has {} coordinates, field expects {d}",
                point.len()
            )));
        }
        let n_deriv = n_deriv.min(d);
        let mut ws = Workspace::default();
        let out = engine::forward(&self.spec, self.params.as_slice(), &self.map, point, 1, Order::Second, n_deriv, &mut ws);
        let cols = Order::Second.channels(n_deriv);
        let jets: Vec<Jet2> = (0..self.spec.output_dim())
            .map(|c| Jet2 {
                value: out[c * cols],
                grad: (0..n_deriv).map(|k| out[c * cols + 1 + k]).collect(),
                diag2: (0..n_deriv).map(|k| out[c * cols + 1 + n_deriv + k]).collect(),
            })
            .collect();
        if jets.iter().any(|j| !j.is_finite()) {
            return Err(Error::NonFinite {
                context: "jet evaluation".into(),
                point: point.to_vec(),
            });
        }
        Ok(jets)
    }
}

impl DifferentiableField for NetworkField {
    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn jets(&self, point: &[f64]) -> Result<Vec<Jet2>> {
        self.jets_partial(point, self.spec.input_dim())
    }

    fn values(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.forward(point)
    }
}

type AnalyticFn<const D: usize> = dyn Fn(&[TaylorJet<D>; D]) -> Vec<TaylorJet<D>> + Send + Sync;

/// Closed-form field with exact derivatives from [`TaylorJet`] arithmetic.
#[derive(Clone)]
pub struct AnalyticField<const D: usize> {
    outputs: usize,
    f: Arc<AnalyticFn<D>>,
}

impl<const D: usize> AnalyticField<D> {
    pub fn new<F>(outputs: usize, f: F) -> Self
    where
        F: Fn(&[TaylorJet<D>; D]) -> Vec<TaylorJet<D>> + Send + Sync + 'static,
    {
        Self {
            outputs,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Vec<TaylorJet<D>> {
        (self.f)(&TaylorJet::point(point))
    }
}

impl<const D: usize> std::fmt::Debug for AnalyticField<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticField")
            .field("inputs", &D)
            .field("outputs", &self.outputs)
            .finish()
    }
}

impl<const D: usize> DifferentiableField for AnalyticField<D> {
    fn input_dim(&self) -> usize {
        D
    }

    fn output_dim(&self) -> usize {
        self.outputs
    }

    fn jets(&self, point: &[f64]) -> Result<Vec<Jet2>> {
        if point.len() != D {
            return Err(Error::contract(format!(
                "point has {} coordinates, field expects {D}",
                point.len()
            )));
        }
        let out = self.eval(point);
        debug_assert_eq!(out.len(), self.outputs);
        let jets: Vec<Jet2> = out.into_iter().map(TaylorJet::to_jet2).collect();
        if jets.iter().any(|j| !j.is_finite()) {
            return Err(Error::NonFinite {
                context: "analytic field".into(),
                point: point.to_vec(),
            });
        }
        Ok(jets)
    }
}

/// Several fields side by side; channels are concatenated in order.
#[derive(Clone)]
pub struct FieldBundle {
    parts: Vec<Arc<dyn DifferentiableField>>,
}

impl FieldBundle {
    pub fn new(parts: Vec<Arc<dyn DifferentiableField>>) -> Result<Self> {
        let d = parts.first().map(|p| p.input_dim()).unwrap_or(0);
        if parts.iter().any(|p| p.input_dim() != d) {
            return Err(Error::contract("bundled fields must share their input dimension"));
        }
        Ok(Self { parts })
    }
}

impl DifferentiableField for FieldBundle {
    fn input_dim(&self) -> usize {
        self.parts.first().map(|p| p.input_dim()).unwrap_or(0)
    }

    fn output_dim(&self) -> usize {
        self.parts.iter().map(|p| p.output_dim()).sum()
    }

    fn jets(&self, point: &[f64]) -> Result<Vec<Jet2>> {
        let mut out = Vec::with_capacity(self.output_dim());
        for p in &self.parts {
            out.extend(p.jets(point)?);
        }
        Ok(out)
    }
}
