//! Composite losses over one or more networks and trainable scalars.
//!
//! A [`LossTerm`] pairs a sampling set with a pointwise operator and a
//! reduction. A [`TrainingProblem`] owns the networks, the extra trainables
//! and the terms; its flat parameter vector θ is the concatenation of every
//! network's parameters followed by the extras.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::autodiff::engine::{self, Workspace};
use crate::autodiff::{DifferentiableField, Dual, DynOp, NetworkField, Order, PointCtx, PointwiseOp, Scalar, SpatialJet, MAX_SEEDS};
use crate::error::{Error, Result};
use crate::network::{init_params, InputMap, MlpSpec, ParameterVector};
use crate::sampling::SamplingSet;

/// Points per work item of the parallel loss evaluation.
const CHUNK: usize = 256;

/// A target value attached to a condition.
#[derive(Clone)]
pub enum Target {
    Constant(f64),
    /// One value per point of the term's sampling set.
    PerPoint(Arc<Vec<f64>>),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Target {
    pub fn function(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Target::Function(Arc::new(f))
    }

    #[inline]
    pub fn at(&self, ctx: &PointCtx) -> f64 {
        match self {
            Target::Constant(c) => *c,
            Target::PerPoint(v) => v[ctx.index],
            Target::Function(f) => f(ctx.point),
        }
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Constant(c) => write!(f, "Constant({c})"),
            Target::PerPoint(v) => write!(f, "PerPoint({} values)", v.len()),
            Target::Function(_) => f.write_str("Function"),
        }
    }
}

impl From<f64> for Target {
    fn from(c: f64) -> Self {
        Target::Constant(c)
    }
}

/// `f_j − target_j` for every bound channel.
#[derive(Debug, Clone)]
pub struct Dirichlet {
    pub targets: Vec<Target>,
}

impl PointwiseOp for Dirichlet {
    fn order(&self) -> Order {
        Order::Value
    }
    fn n_fields(&self) -> usize {
        self.targets.len()
    }
    fn n_equations(&self) -> usize {
        self.targets.len()
    }
    fn eval<S: Scalar>(&self, ctx: &PointCtx, f: &[SpatialJet<S>], _extras: &[S], out: &mut [S]) {
        for ((o, j), t) in out.iter_mut().zip(f).zip(&self.targets) {
            *o = j.v - t.at(ctx);
        }
    }
}

/// `∂f/∂n − target` with the normal stored on the sampling set.
#[derive(Debug, Clone)]
pub struct Neumann {
    pub target: Target,
}

impl PointwiseOp for Neumann {
    fn order(&self) -> Order {
        Order::First
    }
    fn n_fields(&self) -> usize {
        1
    }
    fn n_equations(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, ctx: &PointCtx, f: &[SpatialJet<S>], _extras: &[S], out: &mut [S]) {
        out[0] = f[0].normal(ctx.normal_or_panic()) - self.target.at(ctx);
    }
}

/// `f_a − f_b` across an interface.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceJump;

impl PointwiseOp for InterfaceJump {
    fn order(&self) -> Order {
        Order::Value
    }
    fn n_fields(&self) -> usize {
        2
    }
    fn n_equations(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, _ctx: &PointCtx, f: &[SpatialJet<S>], _extras: &[S], out: &mut [S]) {
        out[0] = f[0].v - f[1].v;
    }
}

/// `k_a ∂f_a/∂n − k_b ∂f_b/∂n`, both sides using the same normal.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceFlux {
    pub k_a: f64,
    pub k_b: f64,
    pub normal: [f64; 2],
}

impl PointwiseOp for InterfaceFlux {
    fn order(&self) -> Order {
        Order::First
    }
    fn n_fields(&self) -> usize {
        2
    }
    fn n_equations(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, _ctx: &PointCtx, f: &[SpatialJet<S>], _extras: &[S], out: &mut [S]) {
        out[0] = f[0].normal(self.normal) * self.k_a - f[1].normal(self.normal) * self.k_b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    PdeResidual,
    Dirichlet,
    Neumann,
    Data,
    InterfaceValue,
    InterfaceFlux,
    MeanValue,
    Initial,
}

/// Channel `channel` of network `network`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binding {
    pub network: usize,
    pub channel: usize,
}

pub fn bind(network: usize, channel: usize) -> Binding {
    Binding { network, channel }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// `(1/N) Σ_i Σ_r r_r(x_i)²`
    MeanOfSquares,
    /// `Σ_r ((1/N) Σ_i r_r(x_i))²`
    SquareOfMean,
}

#[derive(Clone)]
pub struct LossTerm {
    pub name: String,
    pub kind: TermKind,
    pub points: Arc<SamplingSet>,
    pub fields: Vec<Binding>,
    /// Indices into the problem's extra trainables, in operator order.
    pub extras: Vec<usize>,
    pub op: Arc<dyn DynOp>,
    pub reduction: Reduction,
    pub weight: f64,
}

impl fmt::Debug for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossTerm")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("points", &self.points.len())
            .field("fields", &self.fields)
            .field("extras", &self.extras)
            .field("reduction", &self.reduction)
            .field("weight", &self.weight)
            .finish()
    }
}

impl LossTerm {
    pub fn new(
        name: impl Into<String>,
        kind: TermKind,
        points: Arc<SamplingSet>,
        fields: Vec<Binding>,
        op: Arc<dyn DynOp>,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            points,
            fields,
            extras: Vec::new(),
            op,
            reduction: Reduction::MeanOfSquares,
            weight: 1.0,
        }
    }

    pub fn pde(name: impl Into<String>, points: Arc<SamplingSet>, fields: Vec<Binding>, op: Arc<dyn DynOp>) -> Self {
        Self::new(name, TermKind::PdeResidual, points, fields, op)
    }

    pub fn dirichlet(name: impl Into<String>, points: Arc<SamplingSet>, fields: Vec<Binding>, targets: Vec<Target>) -> Self {
        Self::new(name, TermKind::Dirichlet, points, fields, Arc::new(Dirichlet { targets }))
    }

    /// Dirichlet condition on an initial-time sampling.
    pub fn initial(name: impl Into<String>, points: Arc<SamplingSet>, fields: Vec<Binding>, targets: Vec<Target>) -> Self {
        Self {
            kind: TermKind::Initial,
            ..Self::dirichlet(name, points, fields, targets)
        }
    }

    pub fn neumann(name: impl Into<String>, points: Arc<SamplingSet>, field: Binding, target: Target) -> Self {
        Self::new(name, TermKind::Neumann, points, vec![field], Arc::new(Neumann { target }))
    }

    pub fn data(name: impl Into<String>, points: Arc<SamplingSet>, field: Binding, values: Vec<f64>) -> Self {
        let op = Dirichlet {
            targets: vec![Target::PerPoint(Arc::new(values))],
        };
        Self::new(name, TermKind::Data, points, vec![field], Arc::new(op))
    }

    pub fn interface_value(name: impl Into<String>, points: Arc<SamplingSet>, a: Binding, b: Binding) -> Self {
        Self::new(name, TermKind::InterfaceValue, points, vec![a, b], Arc::new(InterfaceJump))
    }

    pub fn interface_flux(
        name: impl Into<String>,
        points: Arc<SamplingSet>,
        a: Binding,
        b: Binding,
        k_a: f64,
        k_b: f64,
        normal: [f64; 2],
    ) -> Self {
        let op = InterfaceFlux { k_a, k_b, normal };
        Self::new(name, TermKind::InterfaceFlux, points, vec![a, b], Arc::new(op))
    }

    /// `(mean of the channel over the points − target)²`.
    pub fn mean_value(name: impl Into<String>, points: Arc<SamplingSet>, field: Binding, target: f64) -> Self {
        let op = Dirichlet {
            targets: vec![Target::Constant(target)],
        };
        Self {
            reduction: Reduction::SquareOfMean,
            ..Self::new(name, TermKind::MeanValue, points, vec![field], Arc::new(op))
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_extras(mut self, extras: Vec<usize>) -> Self {
        self.extras = extras;
        self
    }

    fn validate(&self, networks: &[NetworkSlot], n_extras: usize) -> Result<()> {
        let fail = |m: String| Err(Error::contract(format!("term `{}`: {m}", self.name)));
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return fail(format!("weight must be positive, got {}", self.weight));
        }
        if self.points.is_empty() {
            return fail("empty sampling".into());
        }
        if self.op.n_fields() != self.fields.len() {
            return fail(format!("operator reads {} fields, {} bound", self.op.n_fields(), self.fields.len()));
        }
        if self.op.n_extras() != self.extras.len() {
            return fail(format!("operator reads {} extras, {} bound", self.op.n_extras(), self.extras.len()));
        }
        if 5 * self.fields.len() + self.extras.len() > MAX_SEEDS {
            return fail("too many bound channels".into());
        }
        if self.extras.iter().any(|&e| e >= n_extras) {
            return fail("unknown extra trainable".into());
        }
        for b in &self.fields {
            let Some(net) = networks.get(b.network) else {
                return fail(format!("unknown network {}", b.network));
            };
            if b.channel >= net.spec.output_dim() {
                return fail(format!("network `{}` has no channel {}", net.name, b.channel));
            }
            if net.spec.input_dim() != self.points.dim() {
                return fail(format!(
                    "points have {} coordinates, network `{}` takes {}",
                    self.points.dim(),
                    net.name,
                    net.spec.input_dim()
                ));
            }
        }
        if self.kind == TermKind::Neumann && self.points.normals().is_none() {
            return fail("Neumann sampling carries no normals".into());
        }
        if let Reduction::SquareOfMean = self.reduction {
            if self.op.order() != Order::Value {
                return fail("square-of-mean terms must be value-only".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSlot {
    pub name: String,
    pub spec: MlpSpec,
    pub map: InputMap,
}

impl NetworkSlot {
    pub fn new(name: impl Into<String>, spec: MlpSpec, map: InputMap) -> Self {
        Self {
            name: name.into(),
            spec,
            map,
        }
    }

    /// Derivatives are taken with respect to the leading (spatial) inputs only.
    pub fn n_deriv(&self) -> usize {
        self.spec.input_dim().min(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraParam {
    pub name: String,
    pub initial: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub networks: Vec<NetworkSlot>,
    pub extras: Vec<ExtraParam>,
    pub terms: Vec<LossTerm>,
    offsets: Vec<usize>,
}

impl TrainingProblem {
    pub fn new(networks: Vec<NetworkSlot>, extras: Vec<ExtraParam>, terms: Vec<LossTerm>) -> Result<Self> {
        if networks.is_empty() {
            return Err(Error::contract("a problem needs at least one network"));
        }
        for n in &networks {
            if n.map.dim() != n.spec.input_dim() {
                return Err(Error::contract(format!("input map of `{}` has the wrong dimension", n.name)));
            }
        }
        for t in &terms {
            t.validate(&networks, extras.len())?;
        }
        let mut offsets = vec![0];
        for n in &networks {
            offsets.push(offsets.last().unwrap() + n.spec.param_count());
        }
        Ok(Self {
            networks,
            extras,
            terms,
            offsets,
        })
    }

    pub fn n_params(&self) -> usize {
        self.offsets.last().unwrap() + self.extras.len()
    }

    pub fn network_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn extras_range(&self) -> Range<usize> {
        let n = *self.offsets.last().unwrap();
        n..n + self.extras.len()
    }

    pub fn network_index(&self, name: &str) -> Option<usize> {
        self.networks.iter().position(|n| n.name == name)
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    /// Glorot initialization of every network (seeded per network) followed
    /// by the initial values of the extras.
    pub fn initial_theta(&self, seed: u64) -> ParameterVector {
        let mut theta = Vec::with_capacity(self.n_params());
        for (i, n) in self.networks.iter().enumerate() {
            let s = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            theta.extend(init_params(&n.spec, s).0);
        }
        theta.extend(self.extras.iter().map(|e| e.initial));
        ParameterVector(theta)
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::contract(format!(
                "θ has {} entries, the problem has {} trainables",
                theta.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Network `i` of θ as a differentiable field.
    pub fn network_field(&self, theta: &[f64], i: usize) -> Result<NetworkField> {
        self.check_theta(theta)?;
        let n = &self.networks[i];
        NetworkField::new(n.spec.clone(), ParameterVector(theta[self.network_range(i)].to_vec()), n.map.clone())
    }

    pub fn network_fields(&self, theta: &[f64]) -> Result<Vec<NetworkField>> {
        (0..self.networks.len()).map(|i| self.network_field(theta, i)).collect()
    }

    /// The same problem with a different term list.
    pub fn with_terms(&self, terms: Vec<LossTerm>) -> Result<Self> {
        Self::new(self.networks.clone(), self.extras.clone(), terms)
    }
}

/// Loss, unweighted term values and (optionally) the gradient at one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub terms: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

struct ChunkOut {
    term: usize,
    /// Sum of squared residuals (mean of squares) or the finished term value.
    value: f64,
    grad: Option<Vec<f64>>,
    bad_point: Option<Vec<f64>>,
}

fn seed_dual(v: f64, slot: usize, with_grad: bool) -> Dual {
    if with_grad {
        Dual::seeded(v, slot)
    } else {
        Dual::constant(v)
    }
}

/// Reads the jet of one channel from a network output matrix.
#[inline]
fn spatial_from(out: &[f64], cols: usize, p: usize, n: usize, ch: usize, order: Order, nd: usize) -> [f64; 5] {
    let at = |block: usize| out[ch * cols + block * n + p];
    let first = order != Order::Value;
    let second = order == Order::Second;
    [
        at(0),
        if first && nd >= 1 { at(1) } else { 0.0 },
        if first && nd >= 2 { at(2) } else { 0.0 },
        if second && nd >= 1 { at(1 + nd) } else { 0.0 },
        if second && nd >= 2 { at(2 + nd) } else { 0.0 },
    ]
}

/// Output-matrix column block of jet component `k` (v, dx, dy, dxx, dyy).
#[inline]
fn component_block(k: usize, order: Order, nd: usize) -> Option<usize> {
    match k {
        0 => Some(0),
        1 | 2 if order != Order::Value && k <= nd => Some(k),
        3 | 4 if order == Order::Second && k - 2 <= nd => Some(1 + nd + (k - 3)),
        _ => None,
    }
}

fn eval_chunk(
    problem: &TrainingProblem,
    theta: &[f64],
    ti: usize,
    range: Range<usize>,
    with_grad: bool,
    ws: &mut [Workspace],
) -> ChunkOut {
    let term = &problem.terms[ti];
    let op = term.op.as_ref();
    let order = op.order();
    let n = range.len();
    let nb = term.fields.len();
    let neq = op.n_equations();
    let coords = &term.points.coords()[range.start * term.points.dim()..range.end * term.points.dim()];

    // forward every network the term touches
    let mut nets: Vec<usize> = term.fields.iter().map(|b| b.network).collect();
    nets.sort_unstable();
    nets.dedup();
    for &ni in &nets {
        let slot = &problem.networks[ni];
        let params = &theta[problem.network_range(ni)];
        engine::forward(&slot.spec, params, &slot.map, coords, n, order, slot.n_deriv(), &mut ws[ni]);
    }
    let cols_of = |ni: usize| order.channels(problem.networks[ni].n_deriv()) * n;

    let extras: Vec<f64> = term.extras.iter().map(|&e| theta[problem.extras_range().start + e]).collect();
    let mut adj: Vec<Vec<f64>> = vec![Vec::new(); problem.networks.len()];
    if with_grad {
        for &ni in &nets {
            adj[ni] = vec![0.0; problem.networks[ni].spec.output_dim() * cols_of(ni)];
        }
    }
    let mut grad_extras = vec![0.0; term.extras.len()];

    let scale = term.weight / term.points.len() as f64;
    let mut value = 0.0;
    let mut bad_point = None;
    let mut jets = vec![SpatialJet::<Dual>::constant(0.0); nb];
    let mut xs: Vec<Dual> = Vec::with_capacity(term.extras.len());
    let mut res = vec![Dual::constant(0.0); neq];
    // square-of-mean terms keep every residual until the mean is known
    let mut kept: Vec<Dual> = Vec::new();

    for p in 0..n {
        let gi = range.start + p;
        for (b, bind) in term.fields.iter().enumerate() {
            let ni = bind.network;
            let c = spatial_from(ws[ni].output(), cols_of(ni), p, n, bind.channel, order, problem.networks[ni].n_deriv());
            jets[b] = SpatialJet {
                v: seed_dual(c[0], 5 * b, with_grad),
                dx: seed_dual(c[1], 5 * b + 1, with_grad),
                dy: seed_dual(c[2], 5 * b + 2, with_grad),
                dxx: seed_dual(c[3], 5 * b + 3, with_grad),
                dyy: seed_dual(c[4], 5 * b + 4, with_grad),
            };
        }
        xs.clear();
        xs.extend(extras.iter().enumerate().map(|(e, &x)| seed_dual(x, 5 * nb + e, with_grad)));
        let ctx = PointCtx {
            index: gi,
            point: term.points.point(gi),
            normal: term.points.normal(gi),
        };
        if with_grad {
            op.eval_dual(&ctx, &jets, &xs, &mut res);
        } else {
            // plain arithmetic mirrors the dual value path exactly
            let jf: Vec<SpatialJet<f64>> = jets
                .iter()
                .map(|j| SpatialJet {
                    v: j.v.v,
                    dx: j.dx.v,
                    dy: j.dy.v,
                    dxx: j.dxx.v,
                    dyy: j.dyy.v,
                })
                .collect();
            let mut rf = vec![0.0; neq];
            op.eval_f64(&ctx, &jf, &extras, &mut rf);
            for (r, v) in res.iter_mut().zip(rf) {
                *r = Dual::constant(v);
            }
        }
        if bad_point.is_none() && res.iter().any(|r| !r.v.is_finite()) {
            bad_point = Some(ctx.point.to_vec());
        }
        match term.reduction {
            Reduction::MeanOfSquares => {
                for r in &res {
                    value += r.v * r.v;
                }
                if with_grad {
                    for r in &res {
                        scatter(problem, term, order, n, p, r, 2.0 * r.v * scale, &mut adj, &mut grad_extras);
                    }
                }
            }
            Reduction::SquareOfMean => kept.extend_from_slice(&res),
        }
    }

    if term.reduction == Reduction::SquareOfMean {
        let inv_n = 1.0 / term.points.len() as f64;
        for j in 0..neq {
            let mut s = 0.0;
            for p in 0..n {
                s += kept[p * neq + j].v;
            }
            let m = s * inv_n;
            value += m * m;
            if with_grad {
                for p in 0..n {
                    scatter(problem, term, order, n, p, &kept[p * neq + j], 2.0 * m * scale, &mut adj, &mut grad_extras);
                }
            }
        }
    }

    let grad = with_grad.then(|| {
        let mut g = vec![0.0; problem.n_params()];
        for &ni in &nets {
            let slot = &problem.networks[ni];
            let r = problem.network_range(ni);
            engine::backward(&slot.spec, &theta[r.clone()], &mut ws[ni], &adj[ni], &mut g[r]);
        }
        let off = problem.extras_range().start;
        for (e, &ge) in term.extras.iter().zip(&grad_extras) {
            g[off + e] += ge;
        }
        g
    });
    ChunkOut {
        term: ti,
        value,
        grad,
        bad_point,
    }
}

/// Adds `coef · ∂r/∂(jet components)` to the output adjoints of the bound
/// networks and `coef · ∂r/∂(extras)` to the extras gradient.
#[allow(clippy::too_many_arguments)]
#[inline]
fn scatter(
    problem: &TrainingProblem,
    term: &LossTerm,
    order: Order,
    n: usize,
    p: usize,
    r: &Dual,
    coef: f64,
    adj: &mut [Vec<f64>],
    grad_extras: &mut [f64],
) {
    if coef == 0.0 {
        return;
    }
    for (b, bind) in term.fields.iter().enumerate() {
        let ni = bind.network;
        let nd = problem.networks[ni].n_deriv();
        let cols = order.channels(nd) * n;
        for k in 0..5 {
            let d = r.d[5 * b + k];
            if d == 0.0 {
                continue;
            }
            if let Some(block) = component_block(k, order, nd) {
                adj[ni][bind.channel * cols + block * n + p] += coef * d;
            }
        }
    }
    let nb = term.fields.len();
    for (e, g) in grad_extras.iter_mut().enumerate() {
        *g += coef * r.d[5 * nb + e];
    }
}

/// Evaluates every term (and the gradient when asked) at θ.
///
/// Points are processed in fixed chunks, in parallel, and reduced in chunk
/// order, so the result does not depend on the number of worker threads.
pub fn evaluate(problem: &TrainingProblem, theta: &[f64], with_grad: bool) -> Result<Evaluation> {
    problem.check_theta(theta)?;
    crate::init_threads();
    let mut items = Vec::new();
    for (ti, t) in problem.terms.iter().enumerate() {
        let n = t.points.len();
        let step = match t.reduction {
            Reduction::MeanOfSquares => CHUNK,
            Reduction::SquareOfMean => n,
        };
        let mut s = 0;
        while s < n {
            items.push((ti, s..(s + step).min(n)));
            s += step;
        }
    }
    let n_nets = problem.networks.len();
    let outs: Vec<ChunkOut> = items
        .into_par_iter()
        .map_init(
            || (0..n_nets).map(|_| Workspace::default()).collect::<Vec<_>>(),
            |ws, (ti, r)| eval_chunk(problem, theta, ti, r, with_grad, ws),
        )
        .collect();

    let mut sums = vec![0.0; problem.terms.len()];
    let mut grad = with_grad.then(|| vec![0.0; problem.n_params()]);
    for o in &outs {
        if let Some(p) = &o.bad_point {
            return Err(Error::NonFinite {
                context: format!("loss term `{}`", problem.terms[o.term].name),
                point: p.clone(),
            });
        }
        sums[o.term] += o.value;
        if let (Some(g), Some(c)) = (grad.as_mut(), o.grad.as_ref()) {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of loss term `{}`", problem.terms[o.term].name),
                    point: Vec::new(),
                });
            }
            for (a, b) in g.iter_mut().zip(c) {
                *a += b;
            }
        }
    }
    let terms: Vec<f64> = problem
        .terms
        .iter()
        .zip(&sums)
        .map(|(t, &s)| match t.reduction {
            Reduction::MeanOfSquares => s / t.points.len() as f64,
            Reduction::SquareOfMean => s,
        })
        .collect();
    let mut loss = 0.0;
    for (t, v) in problem.terms.iter().zip(&terms) {
        loss += t.weight * v;
    }
    if !loss.is_finite() {
        let bad = problem.terms.iter().zip(&terms).find(|(_, v)| !v.is_finite());
        return Err(Error::NonFinite {
            context: format!("loss term `{}`", bad.map_or("?", |(t, _)| t.name.as_str())),
            point: Vec::new(),
        });
    }
    Ok(Evaluation { loss, terms, grad })
}

/// Weighted sum of all terms at θ.
pub fn total_loss(problem: &TrainingProblem, theta: &[f64]) -> Result<f64> {
    evaluate(problem, theta, false).map(|e| e.loss)
}

/// Total loss and its exact gradient with respect to θ.
pub fn loss_gradient(problem: &TrainingProblem, theta: &ParameterVector) -> Result<(f64, ParameterVector)> {
    let e = evaluate(problem, theta.as_slice(), true)?;
    Ok((e.loss, ParameterVector(e.grad.expect("gradient requested"))))
}

/// Residual vector of a term at every one of its points, with arbitrary
/// fields standing in for the networks (`fields[i]` replaces network `i`).
pub fn term_residuals(term: &LossTerm, fields: &[&dyn DifferentiableField], extras: &[f64]) -> Result<Vec<Vec<f64>>> {
    let op = term.op.as_ref();
    let x: Vec<f64> = term.extras.iter().map(|&e| extras[e]).collect();
    (0..term.points.len())
        .into_par_iter()
        .map(|i| {
            let point = term.points.point(i);
            let mut jets = Vec::with_capacity(term.fields.len());
            for b in &term.fields {
                let f = fields
                    .get(b.network)
                    .ok_or_else(|| Error::contract(format!("no field for network {}", b.network)))?;
                jets.push(f.jets(point)?[b.channel].spatial());
            }
            let ctx = PointCtx {
                index: i,
                point,
                normal: term.points.normal(i),
            };
            let mut res = vec![0.0; op.n_equations()];
            op.eval_f64(&ctx, &jets, &x, &mut res);
            if res.iter().any(|r| !r.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("loss term `{}`", term.name),
                    point: point.to_vec(),
                });
            }
            Ok(res)
        })
        .collect()
}

/// Unweighted value of one term with arbitrary fields standing in for the
/// networks. Slow path used for checks and metrics.
pub fn term_value(term: &LossTerm, fields: &[&dyn DifferentiableField], extras: &[f64]) -> Result<f64> {
    let res = term_residuals(term, fields, extras)?;
    let n = res.len() as f64;
    Ok(match term.reduction {
        Reduction::MeanOfSquares => res.iter().flatten().map(|r| r * r).sum::<f64>() / n,
        Reduction::SquareOfMean => {
            let mut acc = vec![0.0; term.op.n_equations()];
            for r in &res {
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            acc.iter().map(|a| (a / n) * (a / n)).sum()
        }
    })
}

/// Mean squared residual of each equation of a term separately.
pub fn equation_mse(term: &LossTerm, fields: &[&dyn DifferentiableField], extras: &[f64]) -> Result<Vec<f64>> {
    let res = term_residuals(term, fields, extras)?;
    let mut acc = vec![0.0; term.op.n_equations()];
    for r in &res {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v * v;
        }
    }
    Ok(acc.into_iter().map(|a| a / res.len() as f64).collect())
}

fn expect_kind(term: &LossTerm, kinds: &[TermKind]) -> Result<()> {
    if kinds.contains(&term.kind) {
        Ok(())
    } else {
        Err(Error::contract(format!("term `{}` is a {:?} term", term.name, term.kind)))
    }
}

/// Mean squared residual of a PDE term.
pub fn mse_pde(term: &LossTerm, fields: &[&dyn DifferentiableField], extras: &[f64]) -> Result<f64> {
    expect_kind(term, &[TermKind::PdeResidual])?;
    term_value(term, fields, extras)
}

/// Mean squared misfit of a Dirichlet (or initial) condition; multiple bound
/// channels are summed per point.
pub fn mse_dirichlet(term: &LossTerm, fields: &[&dyn DifferentiableField]) -> Result<f64> {
    expect_kind(term, &[TermKind::Dirichlet, TermKind::Initial])?;
    term_value(term, fields, &[])
}

pub fn mse_neumann(term: &LossTerm, fields: &[&dyn DifferentiableField]) -> Result<f64> {
    expect_kind(term, &[TermKind::Neumann])?;
    term_value(term, fields, &[])
}

pub fn mse_data(term: &LossTerm, fields: &[&dyn DifferentiableField]) -> Result<f64> {
    expect_kind(term, &[TermKind::Data])?;
    term_value(term, fields, &[])
}

/// Temperature and flux continuity terms of one interface.
pub fn interface_terms(value: &LossTerm, flux: &LossTerm, fields: &[&dyn DifferentiableField]) -> Result<(f64, f64)> {
    expect_kind(value, &[TermKind::InterfaceValue])?;
    expect_kind(flux, &[TermKind::InterfaceFlux])?;
    if value.points.coords() != flux.points.coords() {
        return Err(Error::contract("interface terms must share their sampling"));
    }
    Ok((term_value(value, fields, &[])?, term_value(flux, fields, &[])?))
}

pub fn mean_value_term(term: &LossTerm, fields: &[&dyn DifferentiableField]) -> Result<f64> {
    expect_kind(term, &[TermKind::MeanValue])?;
    term_value(term, fields, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{AnalyticField, TaylorJet};
    use crate::network::Activation;
    use crate::physics::{Heat, SolidCoefficients};
    use crate::sampling::{latin_hypercube, SetTag};
    use proptest::prelude::*;

    type J = TaylorJet<2>;

    fn pts(v: &[[f64; 2]]) -> Arc<SamplingSet> {
        let p: Vec<Vec<f64>> = v.iter().map(|p| p.to_vec()).collect();
        Arc::new(SamplingSet::from_points(&p, SetTag::Interior).unwrap())
    }

    fn top_wall(n: usize) -> Arc<SamplingSet> {
        let p: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, 1.0]).collect();
        Arc::new(SamplingSet::from_points(&p, SetTag::Boundary("top".into())).unwrap().with_constant_normal([0.0, 1.0]))
    }

    fn constant(c: f64) -> AnalyticField<2> {
        AnalyticField::new(1, move |_| vec![J::constant(c)])
    }

    /// Operator returning a constant residual, for reduction checks.
    struct Fixed(f64);
    impl PointwiseOp for Fixed {
        fn order(&self) -> Order {
            Order::Value
        }
        fn n_fields(&self) -> usize {
            1
        }
        fn n_equations(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, _: &PointCtx, f: &[SpatialJet<S>], _: &[S], out: &mut [S]) {
            out[0] = f[0].v * 0.0 + self.0;
        }
    }

    #[test]
    fn pde_examples() {
        let set = Arc::new(latin_hypercube(30, &[(-1.0, 1.0), (-1.0, 1.0)], 2).unwrap());
        let heat = LossTerm::pde("heat", set, vec![bind(0, 0)], Arc::new(Heat::new(SolidCoefficients::new(2.0).unwrap())));
        let harmonic = AnalyticField::<2>::new(1, |[x, y]| vec![*x * *x - *y * *y + *x * 3.0]);
        assert_eq!(mse_pde(&heat, &[&harmonic], &[]).unwrap(), 0.0);
        let single = LossTerm::pde("r", pts(&[[0.0, 0.0]]), vec![bind(0, 0)], Arc::new(Fixed(0.5)));
        assert_eq!(mse_pde(&single, &[&constant(0.0)], &[]).unwrap(), 0.25);
    }

    #[test]
    fn dirichlet_examples() {
        let wall = pts(&[[0.0, 0.1], [0.0, 0.5], [0.0, 1.9]]);
        let t = LossTerm::dirichlet("T", wall.clone(), vec![bind(0, 0)], vec![1.0.into()]);
        assert_eq!(mse_dirichlet(&t, &[&constant(1.0)]).unwrap(), 0.0);
        assert_eq!(mse_dirichlet(&t, &[&constant(0.0)]).unwrap(), 1.0);
        let zero2 = AnalyticField::<2>::new(2, |_| vec![J::constant(0.0); 2]);
        let ns = LossTerm::dirichlet("W", wall, vec![bind(0, 0), bind(0, 1)], vec![0.0.into(), 0.0.into()]);
        assert_eq!(mse_dirichlet(&ns, &[&zero2]).unwrap(), 0.0);
        let ones = AnalyticField::<2>::new(2, |_| vec![J::constant(1.0); 2]);
        assert_eq!(mse_dirichlet(&ns, &[&ones]).unwrap(), 2.0);
    }

    #[test]
    fn neumann_examples() {
        let top = top_wall(10);
        let term = LossTerm::neumann("A", top, bind(0, 0), 0.0.into());
        assert_eq!(mse_neumann(&term, &[&constant(3.0)]).unwrap(), 0.0);
        let ty = AnalyticField::<2>::new(1, |[_x, y]| vec![*y]);
        assert_eq!(mse_neumann(&term, &[&ty]).unwrap(), 1.0);
        let tx = AnalyticField::<2>::new(1, |[x, _y]| vec![*x]);
        assert_eq!(mse_neumann(&term, &[&tx]).unwrap(), 0.0);
    }

    #[test]
    fn data_examples() {
        let set = latin_hypercube(88, &[(0.0, 1.0), (0.0, 1.0)], 1).unwrap();
        let f = AnalyticField::<2>::new(1, |[x, y]| vec![(*x * *y).sin()]);
        let values: Vec<f64> = set.points().map(|p| (p[0] * p[1]).sin()).collect();
        let set = Arc::new(set);
        let self_term = LossTerm::data("d", set.clone(), bind(0, 0), values);
        assert_eq!(mse_data(&self_term, &[&f]).unwrap(), 0.0);
        let ones = LossTerm::data("d", set.clone(), bind(0, 0), vec![1.0; 88]);
        assert_eq!(mse_data(&ones, &[&constant(0.0)]).unwrap(), 1.0);
        let vals: Vec<f64> = (0..88).map(|i| i as f64 * 0.01).collect();
        let mut idx: Vec<usize> = (0..88).collect();
        idx.reverse();
        let a = LossTerm::data("d", set.clone(), bind(0, 0), vals.clone());
        let b = LossTerm::data("d", Arc::new(set.select(&idx)), bind(0, 0), idx.iter().map(|&i| vals[i]).collect());
        let va = mse_data(&a, &[&f]).unwrap();
        let vb = mse_data(&b, &[&f]).unwrap();
        assert!((va - vb).abs() <= 1e-15 * va);
    }

    #[test]
    fn interface_examples() {
        let seg = pts(&[[1.0, 0.0], [1.5, 0.0], [2.0, 0.0]]);
        let tf = AnalyticField::<2>::new(1, |[x, y]| vec![*x * 0.3 + *y * 2.0 + 1.0]);
        let v = LossTerm::interface_value("c1", seg.clone(), bind(0, 0), bind(1, 0));
        let q = LossTerm::interface_flux("c2", seg.clone(), bind(0, 0), bind(1, 0), 1.0, 1.0, [0.0, -1.0]);
        assert_eq!(interface_terms(&v, &q, &[&tf, &tf]).unwrap(), (0.0, 0.0));
        assert_eq!(interface_terms(&v, &q, &[&constant(1.0), &constant(0.0)]).unwrap(), (1.0, 0.0));
        let other = LossTerm::interface_flux("c2", pts(&[[1.0, 0.0]]), bind(0, 0), bind(1, 0), 1.0, 1.0, [0.0, -1.0]);
        assert!(interface_terms(&v, &other, &[&tf, &tf]).is_err());
    }

    #[test]
    fn flux_is_invariant_under_normal_flip() {
        let seg = pts(&[[1.0, 0.0], [1.3, 0.0], [2.0, 0.0]]);
        let a = AnalyticField::<2>::new(1, |[x, y]| vec![(*x * *y).sin() + *y * 0.4]);
        let b = AnalyticField::<2>::new(1, |[x, y]| vec![*x * 0.1 - *y * *y]);
        let down = LossTerm::interface_flux("c2", seg.clone(), bind(0, 0), bind(1, 0), 0.025, 1.0, [0.0, -1.0]);
        let up = LossTerm::interface_flux("c2", seg, bind(0, 0), bind(1, 0), 0.025, 1.0, [0.0, 1.0]);
        assert_eq!(term_value(&down, &[&a, &b], &[]).unwrap(), term_value(&up, &[&a, &b], &[]).unwrap());
    }

    #[test]
    fn mean_value_examples() {
        let outlet = pts(&[[2.0, 0.0], [2.0, 0.25], [2.0, 0.5]]);
        let t = LossTerm::mean_value("q", outlet.clone(), bind(0, 0), 2.0 / 3.0);
        assert!(mean_value_term(&t, &[&constant(2.0 / 3.0)]).unwrap() < 1e-32);
        assert!((mean_value_term(&t, &[&constant(0.0)]).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        // square of the mean, not mean of squares
        let lin = AnalyticField::<2>::new(1, |[_x, y]| vec![*y * 4.0 - 1.0 + 2.0 / 3.0]);
        assert!(mean_value_term(&t, &[&lin]).unwrap() < 1e-30);
    }

    #[test]
    fn parabolic_inlet_mean_is_two_thirds() {
        let h = 0.5;
        let n = 20_001;
        let s: f64 = (0..n)
            .map(|i| {
                let y = h * i as f64 / (n - 1) as f64;
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * 4.0 * y * (h - y) / (h * h)
            })
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((s - 2.0 / 3.0).abs() < 1e-8);
    }

    fn small_problem(weights: [f64; 2]) -> TrainingProblem {
        let spec = MlpSpec::new(vec![2, 6, 5, 2], Activation::Tanh).unwrap();
        let map = InputMap::to_unit_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let set = Arc::new(latin_hypercube(300, &[(0.0, 1.0), (0.0, 1.0)], 4).unwrap());
        let heat = LossTerm::pde("heat", set, vec![bind(0, 0)], Arc::new(Heat::trainable()))
            .with_extras(vec![0])
            .with_weight(weights[0]);
        let wall = top_wall(7);
        let flux = LossTerm::neumann("flux", wall, bind(0, 1), Target::function(|p| p[0])).with_weight(weights[1]);
        TrainingProblem::new(
            vec![NetworkSlot::new("net", spec, map)],
            vec![ExtraParam {
                name: "k".into(),
                initial: 0.7,
            }],
            vec![heat, flux],
        )
        .unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = small_problem([1.0, 1.0]);
        let theta = p.initial_theta(3);
        let (_, g) = loss_gradient(&p, &theta).unwrap();
        let h = 1e-6;
        for i in 0..p.n_params() {
            let mut a = theta.0.clone();
            let mut b = theta.0.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (total_loss(&p, &a).unwrap() - total_loss(&p, &b).unwrap()) / (2.0 * h);
            let err = (g.0[i] - fd).abs() / (fd.abs() + 1e-8);
            assert!(err < 1e-5 || (g.0[i] - fd).abs() < 1e-9, "component {i}: {} vs {fd}", g.0[i]);
        }
    }

    #[test]
    fn loss_is_bit_identical_with_and_without_gradient() {
        let p = small_problem([1.0, 2.5]);
        let theta = p.initial_theta(8);
        let (l, _) = loss_gradient(&p, &theta).unwrap();
        assert_eq!(l.to_bits(), total_loss(&p, &theta.0).unwrap().to_bits());
    }

    #[test]
    fn loss_is_the_weighted_sum_of_terms() {
        let p = small_problem([0.5, 3.0]);
        let e = evaluate(&p, &p.initial_theta(1).0, false).unwrap();
        assert_eq!(e.loss, 0.5 * e.terms[0] + 3.0 * e.terms[1]);
        assert!(e.terms.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn gradient_is_linear_in_the_weights() {
        let theta = small_problem([1.0, 1.0]).initial_theta(2);
        let g = |w: [f64; 2]| loss_gradient(&small_problem(w), &theta).unwrap().1 .0;
        let (a, b) = (0.3, 1.7);
        let only1 = small_problem([1.0, 1.0]);
        let g1 = {
            let p = only1.with_terms(vec![only1.terms[0].clone()]).unwrap();
            loss_gradient(&p, &theta).unwrap().1 .0
        };
        let g2 = {
            let p = only1.with_terms(vec![only1.terms[1].clone()]).unwrap();
            loss_gradient(&p, &theta).unwrap().1 .0
        };
        let gab = g([a, b]);
        for i in 0..gab.len() {
            let want = a * g1[i] + b * g2[i];
            assert!((gab[i] - want).abs() <= 1e-12 * (want.abs() + 1e-300).max(gab[i].abs()) + 1e-300, "{i}");
        }
    }

    #[test]
    fn square_of_zero_network_output() {
        let spec = MlpSpec::new(vec![1, 3, 1], Activation::Tanh).unwrap();
        let set = Arc::new(SamplingSet::from_points(&[vec![0.4]], SetTag::Interior).unwrap());
        let term = LossTerm::dirichlet("u2", set, vec![bind(0, 0)], vec![0.0.into()]);
        let p = TrainingProblem::new(vec![NetworkSlot::new("u", spec.clone(), InputMap::identity(1))], vec![], vec![term]).unwrap();
        let (l, g) = loss_gradient(&p, &ParameterVector::zeros(spec.param_count())).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_target_gradient_matches_closed_form() {
        // u(x) = a tanh(w x + b) + c, L = (u'(x0) − k)², u' = a w (1 − t²)
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Tanh).unwrap();
        let (w, b, a, c, x0, k) = (0.8, -0.3, 1.4, 0.2, 0.6, 0.5);
        let set = Arc::new(SamplingSet::from_points(&[vec![x0]], SetTag::Boundary("p".into())).unwrap().with_constant_normal([1.0, 0.0]));
        let term = LossTerm::neumann("du", set, bind(0, 0), k.into());
        let p = TrainingProblem::new(vec![NetworkSlot::new("u", spec, InputMap::identity(1))], vec![], vec![term]).unwrap();
        let (l, g) = loss_gradient(&p, &ParameterVector(vec![w, b, a, c])).unwrap();
        let t = (w * x0 + b).tanh();
        let s = 1.0 - t * t;
        let du = a * w * s;
        let e = du - k;
        assert!((l - e * e).abs() < 1e-15);
        // ∂s/∂z = −2 t s
        let dz = a * w * (-2.0 * t * s);
        let want = [2.0 * e * (a * s + dz * x0), 2.0 * e * dz, 2.0 * e * w * s, 0.0];
        for i in 0..4 {
            assert!((g.0[i] - want[i]).abs() < 1e-14, "{i}: {} vs {}", g.0[i], want[i]);
        }
    }

    #[test]
    fn chunking_does_not_change_the_result_across_thread_counts() {
        let p = small_problem([1.0, 1.0]);
        let theta = p.initial_theta(4);
        let base = evaluate(&p, &theta.0, true).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| evaluate(&p, &theta.0, true).unwrap());
        assert_eq!(base, single);
    }

    #[test]
    fn non_finite_loss_names_the_term() {
        let spec = MlpSpec::new(vec![1, 2, 1], Activation::Tanh).unwrap();
        let set = Arc::new(SamplingSet::from_points(&[vec![0.4]], SetTag::Interior).unwrap());
        let term = LossTerm::dirichlet("blowup", set, vec![bind(0, 0)], vec![f64::INFINITY.into()]);
        let p = TrainingProblem::new(vec![NetworkSlot::new("u", spec.clone(), InputMap::identity(1))], vec![], vec![term]).unwrap();
        match total_loss(&p, &vec![0.0; spec.param_count()]) {
            Err(Error::NonFinite { context, .. }) => assert!(context.contains("blowup")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_terms_are_rejected() {
        let spec = MlpSpec::new(vec![2, 2, 1], Activation::Tanh).unwrap();
        let slot = NetworkSlot::new("u", spec, InputMap::identity(2));
        let set = pts(&[[0.0, 0.0]]);
        let bad_weight = LossTerm::dirichlet("w", set.clone(), vec![bind(0, 0)], vec![0.0.into()]).with_weight(0.0);
        assert!(TrainingProblem::new(vec![slot.clone()], vec![], vec![bad_weight]).is_err());
        let bad_channel = LossTerm::dirichlet("c", set.clone(), vec![bind(0, 3)], vec![0.0.into()]);
        assert!(TrainingProblem::new(vec![slot.clone()], vec![], vec![bad_channel]).is_err());
        let no_normals = LossTerm::neumann("n", set, bind(0, 0), 0.0.into());
        assert!(TrainingProblem::new(vec![slot], vec![], vec![no_normals]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_and_duplication_leave_terms_unchanged(seed in 0u64..1000, n in 2usize..40) {
            let set = latin_hypercube(n, &[(0.0, 1.0), (0.0, 1.0)], seed).unwrap();
            let f = AnalyticField::<2>::new(1, |[x, y]| vec![(*x * 3.0).sin() * *y + *x * *x]);
            let heat = Heat::new(SolidCoefficients::new(1.0).unwrap());
            let value = |s: SamplingSet| {
                let t = LossTerm::pde("h", Arc::new(s), vec![bind(0, 0)], Arc::new(heat));
                term_value(&t, &[&f], &[]).unwrap()
            };
            let base = value(set.clone());
            let mut idx: Vec<usize> = (0..n).rev().collect();
            idx.rotate_left((seed as usize) % n);
            let perm = value(set.select(&idx));
            let doubled: Vec<usize> = (0..n).chain(0..n).collect();
            let dup = value(set.select(&doubled));
            prop_assert!(base >= 0.0);
            prop_assert!((perm - base).abs() <= 1e-13 * base.max(1e-300));
            prop_assert!((dup - base).abs() <= 1e-13 * base.max(1e-300));
        }
    }
}
