//! Conditional normalizing flow on the circle coordinate.
//!
//! Each layer is `affine → monotone rational-quadratic spline → π·tanh`. The
//! base density is uniform on (−π, π). The composition is a diffeomorphism of
//! the open interval (−π, π) onto a sub-interval of itself, so the seam at ±π
//! carries zero mass.
//!
//! Per layer the raw parameter block has length `3B + 3`:
//!
//! | offset      | meaning                             |
//! |-------------|-------------------------------------|
//! | 0           | affine log-scale                    |
//! | 1           | affine shift                        |
//! | 2 .. 2+B    | bin widths (softmax-normalized)     |
//! | 2+B .. 2+2B | bin heights (softmax-normalized)    |
//! | 2+2B .. end | knot derivatives (softplus-mapped)  |
//!
//! All-zero raw parameters give an identity affine layer and an identity
//! spline, so the layer reduces to z ↦ π·tanh(z).

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{CircleAngle, TAU};
use crate::scalar::{Dual, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("point {0} lies on the seam ±π where the squash is not invertible")]
    BoundaryPoint(f64),
    #[error("flow produced a non-finite value")]
    NonFinite,
    #[error("expected {expected} raw parameters, got {got}")]
    ParamLength { expected: usize, got: usize },
    #[error("mode search grid must have at least 64 points, got {0}")]
    GridTooSmall(usize),
    #[error("flows with {0} raw parameters exceed the supported Jacobian width")]
    TooManyParams(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub bins: usize,
    /// Spline acts on [−tail_bound, tail_bound]; identity outside.
    pub tail_bound: f64,
    pub min_bin_width: f64,
    pub min_bin_height: f64,
    pub min_derivative: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            bins: 8,
            tail_bound: 1.5 * PI,
            min_bin_width: 1e-3,
            min_bin_height: 1e-3,
            min_derivative: 1e-3,
        }
    }
}

impl FlowConfig {
    pub fn layer_len(&self) -> usize {
        3 * self.bins + 3
    }

    /// Raw derivative value that maps to exactly 1.
    fn derivative_offset(&self) -> f64 {
        ((1.0 - self.min_derivative).exp() - 1.0).ln()
    }
}

/// Raw parameters of a K-layer conditional flow for one data point.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleFlowParams {
    raw: Vec<f64>,
    layers: usize,
    config: FlowConfig,
}

impl CircleFlowParams {
    pub fn new(raw: Vec<f64>, layers: usize, config: FlowConfig) -> Result<Self, FlowError> {
        let expected = layers * config.layer_len();
        if raw.len() != expected || layers == 0 {
            return Err(FlowError::ParamLength { expected, got: raw.len() });
        }
        Ok(CircleFlowParams { raw, layers, config })
    }

    /// Every layer reduces to π·tanh.
    pub fn identity(layers: usize, config: FlowConfig) -> Self {
        CircleFlowParams { raw: vec![0.0; layers * config.layer_len()], layers, config }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        let l = self.config.layer_len();
        &self.raw[k * l..(k + 1) * l]
    }

    pub fn set_affine(&mut self, layer: usize, log_scale: f64, shift: f64) {
        let l = self.config.layer_len();
        self.raw[layer * l] = log_scale;
        self.raw[layer * l + 1] = shift;
    }

    /// Sets knot `knot`'s derivative (0..=B) to `value` > min_derivative.
    pub fn set_knot_derivative(&mut self, layer: usize, knot: usize, value: f64) {
        let cfg = self.config;
        let l = cfg.layer_len();
        let target = value - cfg.min_derivative;
        let raw = target.exp_m1().ln() - cfg.derivative_offset();
        self.raw[layer * l + 2 + 2 * cfg.bins + knot] = raw;
    }
}

/// A draw from the flow together with its log density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub z: CircleAngle,
    pub log_density: f64,
}

struct Spline<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    ds: Vec<S>,
}

fn normalized_knots<S: Scalar>(raw: &[S], min_size: f64, bound: f64) -> Vec<S> {
    let n = raw.len();
    let m = raw.iter().map(|r| r.val()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<S> = raw.iter().map(|&r| (r - m).exp()).collect();
    let mut total = S::cst(0.0);
    for &e in &exps {
        total = total + e;
    }
    let span = 2.0 * bound;
    let free = span - n as f64 * min_size;
    let mut knots = Vec::with_capacity(n + 1);
    let mut acc = S::cst(-bound);
    knots.push(acc);
    for (i, &e) in exps.iter().enumerate() {
        if i + 1 == n {
            knots.push(S::cst(bound));
        } else {
            acc = acc + e / total * free + min_size;
            knots.push(acc);
        }
    }
    knots
}

impl<S: Scalar> Spline<S> {
    fn from_raw(raw: &[S], cfg: &FlowConfig) -> Self {
        let b = cfg.bins;
        let xs = normalized_knots(&raw[0..b], cfg.min_bin_width, cfg.tail_bound);
        let ys = normalized_knots(&raw[b..2 * b], cfg.min_bin_height, cfg.tail_bound);
        let off = cfg.derivative_offset();
        let ds = raw[2 * b..3 * b + 1]
            .iter()
            .map(|&r| (r + off).softplus() + cfg.min_derivative)
            .collect();
        Spline { xs, ys, ds }
    }

    fn bin_of(knots: &[S], v: f64) -> usize {
        let n = knots.len() - 1;
        let mut k = 0;
        while k + 1 < n && knots[k + 1].val() <= v {
            k += 1;
        }
        k
    }

    fn forward(&self, u: S, bound: f64) -> (S, S) {
        if u.val() <= -bound || u.val() >= bound {
            return (u, S::cst(0.0));
        }
        let k = Self::bin_of(&self.xs, u.val());
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (d0, d1) = (self.ds[k], self.ds[k + 1]);
        let w = x1 - x0;
        let h = y1 - y0;
        let s = h / w;
        let xi = (u - x0) / w;
        let one_minus = -xi + 1.0;
        let xi1 = xi * one_minus;
        let num = h * (s * xi * xi + d0 * xi1);
        let den = s + (d1 + d0 - s * 2.0) * xi1;
        let out = y0 + num / den;
        let deriv = s * s * (d1 * xi * xi + s * xi1 * 2.0 + d0 * one_minus * one_minus) / (den * den);
        (out, deriv.ln())
    }

    fn inverse(&self, v: S, bound: f64) -> (S, S) {
        if v.val() <= -bound || v.val() >= bound {
            return (v, S::cst(0.0));
        }
        let k = Self::bin_of(&self.ys, v.val());
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (d0, d1) = (self.ds[k], self.ds[k + 1]);
        let w = x1 - x0;
        let h = y1 - y0;
        let s = h / w;
        let dy = v - y0;
        let c_mix = d1 + d0 - s * 2.0;
        let a = h * (s - d0) + dy * c_mix;
        let b = h * d0 - dy * c_mix;
        let c = -(s * dy);
        let disc = b * b - a * c * 4.0;
        let disc = if disc.val() < 0.0 { disc * 0.0 } else { disc };
        let xi = (c * 2.0) / (-b - disc.sqrt());
        let u = xi * w + x0;
        let one_minus = -xi + 1.0;
        let xi1 = xi * one_minus;
        let den = s + c_mix * xi1;
        let deriv = s * s * (d1 * xi * xi + s * xi1 * 2.0 + d0 * one_minus * one_minus) / (den * den);
        (u, -deriv.ln())
    }
}

fn atanh<S: Scalar>(t: S) -> S {
    ((t + 1.0).ln() - (-t + 1.0).ln()) * 0.5
}

fn layer_forward<S: Scalar>(z: S, raw: &[S], cfg: &FlowConfig) -> (S, S) {
    let log_scale = raw[0];
    let shift = raw[1];
    let u = log_scale.exp() * z + shift;
    let spline = Spline::from_raw(&raw[2..], cfg);
    let (v, ld_spline) = spline.forward(u, cfg.tail_bound);
    let out = v.tanh() * PI;
    let ld_tanh = v.log_sech2() + PI.ln();
    (out, log_scale + ld_spline + ld_tanh)
}

fn layer_inverse<S: Scalar>(z: S, raw: &[S], cfg: &FlowConfig) -> (S, S) {
    let log_scale = raw[0];
    let shift = raw[1];
    let v = atanh(z / PI);
    let ld_tanh = -(v.log_sech2() + PI.ln());
    let spline = Spline::from_raw(&raw[2..], cfg);
    let (u, ld_spline) = spline.inverse(v, cfg.tail_bound);
    let z0 = (u - shift) * (-log_scale).exp();
    (z0, ld_tanh + ld_spline - log_scale)
}

/// Forward pass on a raw coordinate. Returns (z_K, Σ log|∂r/∂z|).
pub fn forward_coord<S: Scalar>(z0: S, raw: &[S], layers: usize, cfg: &FlowConfig) -> (S, S) {
    let l = cfg.layer_len();
    let mut z = z0;
    let mut ld = S::cst(0.0);
    for k in 0..layers {
        let (zn, ldk) = layer_forward(z, &raw[k * l..(k + 1) * l], cfg);
        z = zn;
        ld = ld + ldk;
    }
    (z, ld)
}

/// Inverse pass on a raw coordinate in (−π, π). Returns (z₀, log|∂r⁻¹/∂z|).
pub fn inverse_coord<S: Scalar>(z: S, raw: &[S], layers: usize, cfg: &FlowConfig) -> (S, S) {
    let l = cfg.layer_len();
    let mut x = z;
    let mut ld = S::cst(0.0);
    for k in (0..layers).rev() {
        let (xp, ldk) = layer_inverse(x, &raw[k * l..(k + 1) * l], cfg);
        x = xp;
        ld = ld + ldk;
    }
    (x, ld)
}

pub fn flow_forward(z0: CircleAngle, params: &CircleFlowParams) -> Result<(CircleAngle, f64), FlowError> {
    let c = z0.radians();
    if c.abs() >= PI {
        return Err(FlowError::BoundaryPoint(c));
    }
    let (z, ld) = forward_coord(c, &params.raw, params.layers, &params.config);
    if !z.is_finite() || !ld.is_finite() {
        return Err(FlowError::NonFinite);
    }
    Ok((CircleAngle::new(z), ld))
}

/// Inverts the flow at `z`. The pre-image is returned as a raw coordinate:
/// it lies outside (−π, π) when `z` is outside the flow's support.
pub fn flow_inverse(z: CircleAngle, params: &CircleFlowParams) -> Result<(f64, f64), FlowError> {
    let c = z.radians();
    if c.abs() >= PI {
        return Err(FlowError::BoundaryPoint(c));
    }
    let (z0, ld) = inverse_coord(c, &params.raw, params.layers, &params.config);
    if !z0.is_finite() || !ld.is_finite() {
        return Err(FlowError::NonFinite);
    }
    Ok((z0, ld))
}

/// log q(z) under the uniform base on (−π, π). Points outside the support
/// get −∞.
pub fn flow_log_density(z: CircleAngle, params: &CircleFlowParams) -> Result<f64, FlowError> {
    let (z0, ld_inv) = flow_inverse(z, params)?;
    if z0.abs() > PI {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-TAU.ln() + ld_inv)
}

/// Endpoints of the interval the flow maps (−π, π) onto.
pub fn flow_support(params: &CircleFlowParams) -> (f64, f64) {
    let lo = forward_coord(-PI, &params.raw, params.layers, &params.config).0;
    let hi = forward_coord(PI, &params.raw, params.layers, &params.config).0;
    (lo, hi)
}

/// Draws z₀ uniformly and pushes it through the flow.
pub fn flow_sample<R: rand::Rng + ?Sized>(params: &CircleFlowParams, rng: &mut R) -> Result<FlowSample, FlowError> {
    let z0: f64 = rng.random_range(-PI..PI);
    let (z, ld) = flow_forward(CircleAngle::new(z0), params)?;
    Ok(FlowSample { z, log_density: -TAU.ln() - ld })
}

/// Value of (z, log_det) and their gradients with respect to every raw
/// parameter, for a fixed base point z₀.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowJacobian {
    pub z: f64,
    pub log_det: f64,
    pub dz: Vec<f64>,
    pub dlog_det: Vec<f64>,
}

macro_rules! with_dual_width {
    ($n:expr, $body:ident, $($arg:expr),*) => {{
        let n = $n;
        if n <= 32 {
            Ok($body::<32>($($arg),*))
        } else if n <= 64 {
            Ok($body::<64>($($arg),*))
        } else if n <= 128 {
            Ok($body::<128>($($arg),*))
        } else {
            Err(FlowError::TooManyParams(n))
        }
    }};
}

fn forward_jacobian_n<const N: usize>(z0: f64, params: &CircleFlowParams) -> FlowJacobian {
    let raw: Vec<Dual<N>> = params.raw.iter().enumerate().map(|(i, &r)| Dual::var(r, i)).collect();
    let (z, ld) = forward_coord(Dual::constant(z0), &raw, params.layers, &params.config);
    let n = params.raw.len();
    FlowJacobian { z: z.v, log_det: ld.v, dz: z.d[..n].to_vec(), dlog_det: ld.d[..n].to_vec() }
}

pub fn flow_forward_jacobian(z0: f64, params: &CircleFlowParams) -> Result<FlowJacobian, FlowError> {
    with_dual_width!(params.raw.len(), forward_jacobian_n, z0, params)
}

fn log_density_gradient_n<const N: usize>(z: f64, params: &CircleFlowParams) -> (f64, Vec<f64>) {
    let raw: Vec<Dual<N>> = params.raw.iter().enumerate().map(|(i, &r)| Dual::var(r, i)).collect();
    let (_, ld) = inverse_coord(Dual::constant(z), &raw, params.layers, &params.config);
    (ld.v - TAU.ln(), ld.d[..params.raw.len()].to_vec())
}

/// log q(z) and its gradient with respect to the raw parameters, ignoring
/// the support indicator.
pub fn flow_log_density_gradient(z: CircleAngle, params: &CircleFlowParams) -> Result<(f64, Vec<f64>), FlowError> {
    if z.radians().abs() >= PI {
        return Err(FlowError::BoundaryPoint(z.radians()));
    }
    with_dual_width!(params.raw.len(), log_density_gradient_n, z.radians(), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSearch {
    pub grid_size: usize,
    pub refine_iters: usize,
}

impl Default for ModeSearch {
    fn default() -> Self {
        ModeSearch { grid_size: 1024, refine_iters: 40 }
    }
}

/// argmax of an arbitrary log density on (−π, π): uniform grid scan, then
/// golden-section refinement inside the neighbourhood of the winning cell.
/// Ties go to the smaller angle.
pub fn find_mode_of<F>(log_density: F, search: ModeSearch) -> Result<CircleAngle, FlowError>
where
    F: Fn(f64) -> f64,
{
    if search.grid_size < 64 {
        return Err(FlowError::GridTooSmall(search.grid_size));
    }
    let n = search.grid_size;
    let h = TAU / n as f64;
    let mut best = (f64::NEG_INFINITY, -PI + 0.5 * h);
    for i in 0..n {
        let t = -PI + (i as f64 + 0.5) * h;
        let v = log_density(t);
        if v > best.0 {
            best = (v, t);
        }
    }
    let edge = PI * (1.0 - 1e-12);
    let mut lo = (best.1 - h).max(-edge);
    let mut hi = (best.1 + h).min(edge);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let mut fa = log_density(a);
    let mut fb = log_density(b);
    for _ in 0..search.refine_iters {
        if fa >= fb {
            if fa > best.0 {
                best = (fa, a);
            }
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = log_density(a);
        } else {
            if fb > best.0 {
                best = (fb, b);
            }
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = log_density(b);
        }
    }
    if fa > best.0 {
        best = (fa, a);
    }
    if fb > best.0 {
        best = (fb, b);
    }
    Ok(CircleAngle::new(best.1))
}

/// f(x) := argmax_z q(z | x), evaluated through [`flow_log_density`] only.
pub fn find_mode(params: &CircleFlowParams, search: ModeSearch) -> Result<CircleAngle, FlowError> {
    find_mode_of(
        |t| flow_log_density(CircleAngle::new(t), params).unwrap_or(f64::NEG_INFINITY),
        search,
    )
}
