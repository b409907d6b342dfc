//! Multilayer perceptrons: architecture, initialization, plain evaluation and
//! the flat parameter layout consumed by the optimizers.
//!
//! Parameters are stored layer by layer. Each layer contributes its weight
//! matrix in row-major order (`N_l` rows of `N_{l-1}` inputs) followed by its
//! bias vector. The last layer is linear.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::engine::{self, Order, Workspace};
use crate::error::{Error, Result};

/// Smooth hidden-layer activation. The last layer never applies one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Sine,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Sine,
        Activation::Softplus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Sine => "sine",
            Activation::Softplus => "softplus",
        }
    }

    /// Value and first three derivatives at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                let d3 = -2.0 * d1 * d1 + 4.0 * t * t * d1;
                [t, d1, d2, d3]
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                let d1 = s * (1.0 - s);
                let d2 = d1 * (1.0 - 2.0 * s);
                let d3 = d2 * (1.0 - 2.0 * s) - 2.0 * d1 * d1;
                [s, d1, d2, d3]
            }
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
            Activation::Softplus => {
                let sp = z.max(0.0) + (-z.abs()).exp().ln_1p();
                let s = sigmoid(z);
                let d2 = s * (1.0 - s);
                [sp, s, d2, d2 * (1.0 - 2.0 * s)]
            }
        }
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Sine => z.sin(),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "sine" | "sin" => Ok(Activation::Sine),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::parse("activation", format!("unknown activation `{other}`"))),
        }
    }
}

/// Architecture of a fully connected network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::contract(format!(
                "an MLP needs input, at least one hidden and an output layer, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::contract(format!("layer sizes must be positive: {layer_sizes:?}")));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    /// `inputs -> hidden... -> outputs` shorthand.
    pub fn with_hidden(inputs: usize, hidden: &[usize], outputs: usize, activation: Activation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(inputs);
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        Self::new(sizes, activation)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers (one less than the number of layers).
    pub fn n_affine(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn widest(&self) -> usize {
        *self.layer_sizes.iter().max().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Offsets of `(weights, biases)` for affine layer `l` (0-based).
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.layer_sizes.windows(2).take(l) {
            off += (w[0] + 1) * w[1];
        }
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        (off, off + n_in * n_out)
    }

    /// Same layer sizes with a different hidden activation.
    pub fn with_activation(&self, activation: Activation) -> Self {
        Self {
            layer_sizes: self.layer_sizes.clone(),
            activation,
        }
    }
}

/// The flat trainable-parameter view of one or more networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Split into per-layer `(weights, biases)` matrices.
    pub fn unflatten(&self, spec: &MlpSpec) -> Result<Vec<(Vec<Vec<f64>>, Vec<f64>)>> {
        check_len(spec, &self.0)?;
        let sizes = spec.layer_sizes();
        let mut layers = Vec::with_capacity(spec.n_affine());
        for l in 0..spec.n_affine() {
            let (w_off, b_off) = spec.layer_offsets(l);
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = (0..n_out)
                .map(|i| self.0[w_off + i * n_in..w_off + (i + 1) * n_in].to_vec())
                .collect();
            let b = self.0[b_off..b_off + n_out].to_vec();
            layers.push((w, b));
        }
        Ok(layers)
    }

    /// Inverse of [`ParameterVector::unflatten`].
    pub fn flatten(layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Self {
        let mut v = Vec::new();
        for (w, b) in layers {
            for row in w {
                v.extend_from_slice(row);
            }
            v.extend_from_slice(b);
        }
        Self(v)
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn check_len(spec: &MlpSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::contract(format!(
            "parameter vector has {} entries, architecture {:?} needs {}",
            params.len(),
            spec.layer_sizes(),
            spec.param_count()
        )));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0.0; spec.param_count()];
    let sizes = spec.layer_sizes();
    for l in 0..spec.n_affine() {
        let (w_off, b_off) = spec.layer_offsets(l);
        let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
        for w in &mut v[w_off..b_off] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ParameterVector(v)
}

/// Per-input affine map applied before the first layer: `xi = scale * x + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl InputMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }

    /// Maps each `[lo, hi]` onto `[-1, 1]`. Degenerate intervals are only shifted.
    pub fn to_unit_box(bounds: &[(f64, f64)]) -> Self {
        let mut scale = Vec::with_capacity(bounds.len());
        let mut shift = Vec::with_capacity(bounds.len());
        for &(lo, hi) in bounds {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let s = if half > 0.0 { 1.0 / half } else { 1.0 };
            scale.push(s);
            shift.push(-mid * s);
        }
        Self { scale, shift }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    #[inline]
    pub fn apply(&self, k: usize, x: f64) -> f64 {
        self.scale[k] * x + self.shift[k]
    }
}

/// Plain evaluation of a network at one input.
///
/// Runs through the same batched kernels as the jet evaluator, so the result
/// is bit-identical to the value channel of [`crate::autodiff::evaluate_jet`].
pub fn forward(spec: &MlpSpec, params: &ParameterVector, input: &[f64]) -> Result<Vec<f64>> {
    forward_mapped(spec, params.as_slice(), &InputMap::identity(spec.input_dim()), input)
}

pub(crate) fn forward_mapped(spec: &MlpSpec, params: &[f64], map: &InputMap, input: &[f64]) -> Result<Vec<f64>> {
    check_len(spec, params)?;
    if input.len() != spec.input_dim() {
        return Err(Error::contract(format!(
            "input has {} coordinates, network expects {}",
            input.len(),
            spec.input_dim()
        )));
    }
    let mut ws = Workspace::default();
    let out = engine::forward(spec, params, map, input, 1, Order::Value, 0, &mut ws);
    let res: Vec<f64> = (0..spec.output_dim()).map(|c| out[c]).collect();
    if res.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "network forward".into(),
            point: input.to_vec(),
        });
    }
    Ok(res)
}

/// Writes the text checkpoint: layer sizes, activation, one parameter per line.
pub fn write_checkpoint(path: &Path, spec: &MlpSpec, params: &ParameterVector) -> Result<()> {
    check_len(spec, params.as_slice())?;
    let mut out = String::with_capacity(params.len() * 26 + 64);
    let sizes: Vec<String> = spec.layer_sizes().iter().map(|n| n.to_string()).collect();
    out.push_str(&sizes.join(","));
    out.push('\n');
    out.push_str(spec.activation().name());
    out.push('\n');
    for v in params.as_slice() {
        // 17 significant digits round-trip every f64 exactly.
        out.push_str(&format!("{v:.16e}\n"));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(MlpSpec, ParameterVector)> {
    let text = fs::read_to_string(path)?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<(MlpSpec, ParameterVector)> {
    let mut lines = text.lines();
    let sizes_line = lines
        .next()
        .ok_or_else(|| Error::parse("checkpoint", "empty file"))?;
    let sizes = sizes_line
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse("checkpoint", format!("layer size `{s}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let activation: Activation = lines
        .next()
        .ok_or_else(|| Error::parse("checkpoint", "missing activation line"))?
        .parse()?;
    let spec = MlpSpec::new(sizes, activation)?;
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse("checkpoint", format!("parameter `{l}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    check_len(&spec, &values)?;
    Ok((spec, ParameterVector(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parameter_count_formula() {
        let spec = MlpSpec::new(vec![2, 5, 1], Activation::Tanh).unwrap();
        assert_eq!(spec.param_count(), 21);
        let cavity = MlpSpec::with_hidden(4, &[50, 50, 50], 4, Activation::Tanh).unwrap();
        assert_eq!(cavity.param_count(), 5 * 50 + 51 * 50 * 2 + 51 * 4);
    }

    #[test]
    fn rejects_two_layer_spec() {
        assert!(MlpSpec::new(vec![2, 1], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![2, 0, 1], Activation::Tanh).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let spec = MlpSpec::new(vec![2, 5, 1], Activation::Tanh).unwrap();
        assert_eq!(init_params(&spec, 42), init_params(&spec, 42));
        assert_ne!(init_params(&spec, 42), init_params(&spec, 43));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(vec![3, 7, 7, 2], Activation::Tanh).unwrap();
        let p = ParameterVector::zeros(spec.param_count());
        assert_eq!(forward(&spec, &p, &[0.3, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_neuron_by_hand() {
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Tanh).unwrap();
        // w1, b1, w2, b2
        let p = ParameterVector(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(forward(&spec, &p, &[0.3]).unwrap(), vec![0.3f64.tanh()]);
    }

    #[test]
    fn output_bias_passes_through_sine() {
        let spec = MlpSpec::new(vec![2, 4, 1], Activation::Sine).unwrap();
        let mut p = ParameterVector::zeros(spec.param_count());
        let last = p.len() - 1;
        p.0[last] = 0.75;
        for x in [[0.0, 0.0], [1.5, -3.0], [10.0, 2.0]] {
            assert_eq!(forward(&spec, &p, &x).unwrap(), vec![0.75]);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = MlpSpec::new(vec![2, 4, 1], Activation::Tanh).unwrap();
        let p = init_params(&spec, 1);
        assert!(matches!(forward(&spec, &p, &[1.0]), Err(Error::Contract(_))));
        let short = ParameterVector(vec![0.0; 3]);
        assert!(matches!(forward(&spec, &short, &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let spec = MlpSpec::new(vec![2, 6, 3], Activation::Softplus).unwrap();
        let p = init_params(&spec, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        write_checkpoint(&path, &spec, &p).unwrap();
        let (spec2, p2) = read_checkpoint(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(p.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p2.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("2,6,3\nsoftplus\n"));
    }

    fn arb_spec() -> impl Strategy<Value = MlpSpec> {
        (
            1usize..4,
            proptest::collection::vec(1usize..9, 1..4),
            1usize..4,
            0usize..4,
        )
            .prop_map(|(i, h, o, a)| MlpSpec::with_hidden(i, &h, o, Activation::ALL[a]).unwrap())
    }

    proptest! {
        #[test]
        fn glorot_bounds_and_zero_biases(spec in arb_spec(), seed in 0u64..1000) {
            let p = init_params(&spec, seed);
            let sizes = spec.layer_sizes();
            for l in 0..spec.n_affine() {
                let (w_off, b_off) = spec.layer_offsets(l);
                let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
                prop_assert!(p.0[w_off..b_off].iter().all(|w| w.abs() <= bound));
                prop_assert!(p.0[b_off..b_off + sizes[l + 1]].iter().all(|&b| b == 0.0));
            }
        }

        #[test]
        fn flatten_unflatten_round_trip(spec in arb_spec(), seed in 0u64..1000) {
            let p = init_params(&spec, seed);
            let layers = p.unflatten(&spec).unwrap();
            prop_assert_eq!(ParameterVector::flatten(&layers), p);
        }

        #[test]
        fn tanh_odd_parameter_symmetry(
            hidden in proptest::collection::vec(1usize..8, 1..4),
            seed in 0u64..500,
            x in proptest::collection::vec(-2.0f64..2.0, 2),
        ) {
            // Negating the first-layer weights and every bias negates a tanh MLP.
            let spec = MlpSpec::with_hidden(2, &hidden, 2, Activation::Tanh).unwrap();
            let mut p = init_params(&spec, seed);
            for l in 0..spec.n_affine() {
                let (_, b) = spec.layer_offsets(l);
                for i in 0..spec.layer_sizes()[l + 1] {
                    p.0[b + i] = 0.1 * (i as f64 + 1.0) * if (seed + i as u64) % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
            let mut flipped = p.clone();
            let (w0, b0) = spec.layer_offsets(0);
            for w in &mut flipped.0[w0..b0] {
                *w = -*w;
            }
            for l in 0..spec.n_affine() {
                let (_, b) = spec.layer_offsets(l);
                for v in &mut flipped.0[b..b + spec.layer_sizes()[l + 1]] {
                    *v = -*v;
                }
            }
            let a = forward(&spec, &p, &x).unwrap();
            let b = forward(&spec, &flipped, &x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u + v).abs() <= 1e-14 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn hidden_activation_ranges(z in -30.0f64..30.0) {
            let s = Activation::Sigmoid.value(z);
            prop_assert!(s >= 0.0 && s <= 1.0);
            prop_assert!(Activation::Softplus.value(z) > 0.0);
        }
    }
}
