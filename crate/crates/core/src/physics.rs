//! Residual operators for the governing equations, written once over
//! [`Scalar`] so the same code yields plain residuals and their partials.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DifferentiableField, DynOp, Order, PointCtx, PointwiseOp, Scalar, SpatialJet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidCoefficients {
    pub rho: f64,
    pub mu: f64,
    pub beta: f64,
    #[serde(default = "unit_gravity")]
    pub g: f64,
    pub kf: f64,
    pub cp: f64,
}

fn unit_gravity() -> f64 {
    1.0
}

impl FluidCoefficients {
    pub fn new(rho: f64, mu: f64, beta: f64, g: f64, kf: f64, cp: f64) -> Result<Self> {
        let c = Self { rho, mu, beta, g, kf, cp };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0 && self.mu >= 0.0 && self.kf >= 0.0 && self.cp > 0.0;
        let finite = [self.rho, self.mu, self.beta, self.g, self.kf, self.cp].iter().all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid fluid coefficients {self:?}")))
        }
    }

    /// Same fluid with gravity switched off.
    pub fn without_gravity(self) -> Self {
        Self { beta: 0.0, g: 0.0, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolidCoefficients {
    pub ks: f64,
}

impl SolidCoefficients {
    pub fn new(ks: f64) -> Result<Self> {
        if ks > 0.0 && ks.is_finite() {
            Ok(Self { ks })
        } else {
            Err(Error::contract(format!("solid conductivity must be positive, got {ks}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RansCoefficients {
    pub nu: f64,
    pub rho: f64,
}

impl RansCoefficients {
    pub fn new(nu: f64, rho: f64) -> Result<Self> {
        if nu > 0.0 && rho > 0.0 && nu.is_finite() && rho.is_finite() {
            Ok(Self { nu, rho })
        } else {
            Err(Error::contract(format!("invalid RANS coefficients nu={nu}, rho={rho}")))
        }
    }
}

/// Steady incompressible Navier-Stokes with buoyancy and heat transport.
///
/// Fields: u, v, T, p. Residuals: continuity, momentum x, momentum y, energy.
/// When `mu_input`/`kf_input` are set, the viscosity and the fluid
/// conductivity are read from those coordinates of the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavierStokes {
    pub coeffs: FluidCoefficients,
    pub mu_input: Option<usize>,
    pub kf_input: Option<usize>,
}

impl NavierStokes {
    pub fn buoyancy(coeffs: FluidCoefficients) -> Self {
        Self {
            coeffs,
            mu_input: None,
            kf_input: None,
        }
    }

    pub fn thermal(coeffs: FluidCoefficients) -> Self {
        Self::buoyancy(coeffs.without_gravity())
    }

    pub fn parametric(coeffs: FluidCoefficients, mu_input: usize, kf_input: usize) -> Self {
        Self {
            coeffs,
            mu_input: Some(mu_input),
            kf_input: Some(kf_input),
        }
    }
}

impl PointwiseOp for NavierStokes {
    fn order(&self) -> Order {
        Order::Second
    }
    fn n_fields(&self) -> usize {
        4
    }
    fn n_equations(&self) -> usize {
        4
    }
    fn equation_names(&self) -> Vec<String> {
        ["continuity", "momentum_x", "momentum_y", "energy"].map(String::from).to_vec()
    }

    fn eval<S: Scalar>(&self, ctx: &PointCtx, f: &[SpatialJet<S>], _extras: &[S], out: &mut [S]) {
        let c = &self.coeffs;
        let mu = self.mu_input.map_or(c.mu, |k| ctx.point[k]);
        let kf = self.kf_input.map_or(c.kf, |k| ctx.point[k]);
        let (u, v, t, p) = (&f[0], &f[1], &f[2], &f[3]);
        let inv_rho = 1.0 / c.rho;
        let nu = mu / c.rho;
        let alpha = kf / (c.rho * c.cp);
        out[0] = u.dx + v.dy;
        out[1] = u.v * u.dx + v.v * u.dy + p.dx * inv_rho - u.laplacian() * nu;
        out[2] = u.v * v.dx + v.v * v.dy + p.dy * inv_rho - v.laplacian() * nu - t.v * (c.beta * c.g) - c.g;
        out[3] = u.v * t.dx + v.v * t.dy - t.laplacian() * alpha;
    }
}

/// Where a scalar coefficient comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Fixed(f64),
    /// The given slot of the term's trainable extras.
    Trainable(usize),
}

/// `k (T_xx + T_yy)` for a single temperature field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heat {
    pub k: Coefficient,
}

impl Heat {
    pub fn new(coeffs: SolidCoefficients) -> Self {
        Self {
            k: Coefficient::Fixed(coeffs.ks),
        }
    }

    /// Conductivity taken from the first trainable extra of the term.
    pub fn trainable() -> Self {
        Self {
            k: Coefficient::Trainable(0),
        }
    }
}

impl PointwiseOp for Heat {
    fn order(&self) -> Order {
        Order::Second
    }
    fn n_fields(&self) -> usize {
        1
    }
    fn n_extras(&self) -> usize {
        match self.k {
            Coefficient::Fixed(_) => 0,
            Coefficient::Trainable(i) => i + 1,
        }
    }
    fn n_equations(&self) -> usize {
        1
    }
    fn equation_names(&self) -> Vec<String> {
        vec!["heat".into()]
    }

    fn eval<S: Scalar>(&self, _ctx: &PointCtx, f: &[SpatialJet<S>], extras: &[S], out: &mut [S]) {
        out[0] = match self.k {
            Coefficient::Fixed(k) => f[0].laplacian() * k,
            Coefficient::Trainable(i) => extras[i] * f[0].laplacian(),
        };
    }
}

/// RANS equations with the Boussinesq hypothesis and `ν_t = ν̃²`.
///
/// Fields: U, V, P̃, ν̃. Residuals: continuity, momentum x, momentum y.
/// Convection is kept in conservative form and expanded by the product rule;
/// the diffusion terms only need diagonal second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rans {
    pub coeffs: RansCoefficients,
}

impl PointwiseOp for Rans {
    fn order(&self) -> Order {
        Order::Second
    }
    fn n_fields(&self) -> usize {
        4
    }
    fn n_equations(&self) -> usize {
        3
    }
    fn equation_names(&self) -> Vec<String> {
        ["continuity", "momentum_x", "momentum_y"].map(String::from).to_vec()
    }

    fn eval<S: Scalar>(&self, _ctx: &PointCtx, f: &[SpatialJet<S>], _extras: &[S], out: &mut [S]) {
        let (u, v, p, n) = (&f[0], &f[1], &f[2], &f[3]);
        let inv_rho = 1.0 / self.coeffs.rho;
        let nu_eff = n.v * n.v + self.coeffs.nu;
        // ∂ν_t/∂x, ∂ν_t/∂y
        let ntx = n.v * n.dx * 2.0;
        let nty = n.v * n.dy * 2.0;
        out[0] = u.dx + v.dy;
        out[1] = u.v * u.dx * 2.0 + (u.dy * v.v + u.v * v.dy) + p.dx * inv_rho
            - (ntx * u.dx + nu_eff * u.dxx + nty * u.dy + nu_eff * u.dyy);
        out[2] = (u.dx * v.v + u.v * v.dx) + v.v * v.dy * 2.0 + p.dy * inv_rho
            - (ntx * v.dx + nu_eff * v.dxx + nty * v.dy + nu_eff * v.dyy);
    }
}

/// `u'v' = −ν̃² (U_y + V_x)`.
pub fn boussinesq<S: Scalar>(u: &SpatialJet<S>, v: &SpatialJet<S>, nu_tilde: &SpatialJet<S>) -> S {
    -(nu_tilde.v * nu_tilde.v * (u.dy + v.dx))
}

/// Turbulent shear correlation of a field whose channels are `[U, V, ν̃]` at
/// the given indices.
pub fn boussinesq_correlation(field: &dyn DifferentiableField, channels: [usize; 3], point: &[f64]) -> Result<f64> {
    let j = field.jets(point)?;
    let s = |c: usize| j[c].spatial();
    finite(boussinesq(&s(channels[0]), &s(channels[1]), &s(channels[2])), "correlation", point)
}

/// Operator minus the same operator evaluated on a reference solution, so
/// the reference becomes an exact solution of the forced system.
pub struct Forced<Op> {
    pub inner: Op,
    reference: Arc<dyn DifferentiableField>,
    reference_extras: Vec<f64>,
}

/// Wraps `op` so that `reference` (channels in the operator's field order)
/// solves it exactly. `reference_extras` are the true values of any
/// trainable coefficients the operator reads.
pub fn manufactured_forcing<Op: PointwiseOp>(
    op: Op,
    reference: Arc<dyn DifferentiableField>,
    reference_extras: Vec<f64>,
) -> Result<Forced<Op>> {
    if reference.output_dim() != op.n_fields() {
        return Err(Error::contract(format!(
            "reference provides {} channels, operator reads {}",
            reference.output_dim(),
            op.n_fields()
        )));
    }
    if reference_extras.len() != op.n_extras() {
        return Err(Error::contract("reference extras do not match the operator"));
    }
    Ok(Forced {
        inner: op,
        reference,
        reference_extras,
    })
}

impl<Op: PointwiseOp> Forced<Op> {
    /// The forcing term at a point, i.e. the operator applied to the reference.
    pub fn forcing(&self, ctx: &PointCtx) -> Vec<f64> {
        let jets: Vec<SpatialJet<f64>> = match self.reference.jets(ctx.point) {
            Ok(j) => j.iter().map(|j| j.spatial()).collect(),
            Err(_) => vec![SpatialJet::constant(f64::NAN); self.inner.n_fields()],
        };
        let mut r = vec![0.0; self.inner.n_equations()];
        self.inner.eval(ctx, &jets, &self.reference_extras, &mut r);
        r
    }
}

impl<Op: PointwiseOp> PointwiseOp for Forced<Op> {
    fn order(&self) -> Order {
        self.inner.order()
    }
    fn n_fields(&self) -> usize {
        self.inner.n_fields()
    }
    fn n_extras(&self) -> usize {
        self.inner.n_extras()
    }
    fn n_equations(&self) -> usize {
        self.inner.n_equations()
    }
    fn equation_names(&self) -> Vec<String> {
        self.inner.equation_names()
    }

    fn eval<S: Scalar>(&self, ctx: &PointCtx, f: &[SpatialJet<S>], extras: &[S], out: &mut [S]) {
        self.inner.eval(ctx, f, extras, out);
        for (o, r) in out.iter_mut().zip(self.forcing(ctx)) {
            *o = *o - r;
        }
    }
}

fn finite(v: f64, context: &str, point: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context: context.into(),
            point: point.to_vec(),
        })
    }
}

/// Applies an operator to the leading channels of a field at one point.
pub fn apply_op(
    op: &dyn DynOp,
    field: &dyn DifferentiableField,
    point: &[f64],
    normal: Option<[f64; 2]>,
    extras: &[f64],
) -> Result<Vec<f64>> {
    let jets = field.jets(point)?;
    if jets.len() < op.n_fields() {
        return Err(Error::contract(format!(
            "operator reads {} channels, field provides {}",
            op.n_fields(),
            jets.len()
        )));
    }
    let s: Vec<SpatialJet<f64>> = jets[..op.n_fields()].iter().map(|j| j.spatial()).collect();
    let ctx = PointCtx { index: 0, point, normal };
    let mut out = vec![0.0; op.n_equations()];
    op.eval_f64(&ctx, &s, extras, &mut out);
    for (r, name) in out.iter().zip(op.equation_names()) {
        finite(*r, &name, point)?;
    }
    Ok(out)
}

fn four(v: Vec<f64>) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

/// Residuals (continuity, momentum x, momentum y, energy) of a `(u, v, T, p)` field.
pub fn residual_ns_buoyancy(field: &dyn DifferentiableField, point: &[f64], coeffs: FluidCoefficients) -> Result<[f64; 4]> {
    apply_op(&NavierStokes::buoyancy(coeffs), field, point, None, &[]).map(four)
}

/// As [`residual_ns_buoyancy`] with gravity neglected.
pub fn residual_ns_thermal(field: &dyn DifferentiableField, point: &[f64], coeffs: FluidCoefficients) -> Result<[f64; 4]> {
    apply_op(&NavierStokes::thermal(coeffs), field, point, None, &[]).map(four)
}

/// `k^s ΔT` for the first channel of a field.
pub fn residual_heat(field: &dyn DifferentiableField, point: &[f64], coeffs: SolidCoefficients) -> Result<f64> {
    apply_op(&Heat::new(coeffs), field, point, None, &[]).map(|v| v[0])
}

/// Residuals (continuity, momentum x, momentum y) of a `(U, V, P̃, ν̃)` field.
pub fn residual_rans(field: &dyn DifferentiableField, point: &[f64], coeffs: RansCoefficients) -> Result<[f64; 3]> {
    apply_op(&Rans { coeffs }, field, point, None, &[]).map(|v| [v[0], v[1], v[2]])
}
