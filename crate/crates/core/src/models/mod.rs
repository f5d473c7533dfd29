//! Model zoo: autoencoder, VAE with a wrapped-normal posterior (optionally
//! β-weighted, y-regularized, supervised or decoding straight from y), and
//! flow-based VAEs with an optional equivariant action decoder. Every model
//! has one circle factor per latent dimension (one for S¹, two for the
//! torus) on a shared encoder trunk.

mod action;
mod checkpoint;

pub use action::{action_decoder_first_layer, ActionLayer, FourierCoefficients};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_VERSION};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle_flow::{
    find_mode, flow_forward_jacobian, flow_log_density, CircleFlowParams, FlowConfig, FlowError, ModeSearch,
};
use crate::distributions::{adaptive_truncation, wrapped_normal_log_density_jacobian};
use crate::geometry::{project_to_circle, CircleAngle, GeometryError, TorusPoint, TAU};
use crate::nn::{Activation, Dense, Mlp, NnError, OptimizerState, ParamStore, Tape, Tensor, Var};

/// Spread of the wrapped normal that flow heads are fitted to by
/// [`Model::encoder_target_step`].
pub const FLOW_TARGET_SCALE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model variant: {0}")]
    InvalidVariant(String),
    #[error("loss became non-finite ({0})")]
    NonFinite(String),
    #[error("the supervised variant needs ground-truth angles")]
    MissingLabels,
    #[error("operation needs a torus latent space")]
    NotTorus,
    #[error("input has {got} features, model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ae,
    Vae,
    GfVae,
    ActionGfVae,
    SupVae,
}

impl ModelKind {
    pub fn is_flow(self) -> bool {
        matches!(self, ModelKind::GfVae | ModelKind::ActionGfVae)
    }

    pub fn is_variational(self) -> bool {
        self != ModelKind::Ae
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
            ModelKind::GfVae => "gf_vae",
            ModelKind::ActionGfVae => "action_gf_vae",
            ModelKind::SupVae => "sup_vae",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    Circle,
    Torus,
}

impl LatentKind {
    pub fn circles(self) -> usize {
        match self {
            LatentKind::Circle => 1,
            LatentKind::Torus => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelVariant {
    pub kind: ModelKind,
    pub beta: f64,
    pub y_reg_weight: f64,
    pub decode_from_y: bool,
    pub latent: LatentKind,
    /// Weight of the supervised term for [`ModelKind::SupVae`].
    pub sup_weight: f64,
}

impl Default for ModelVariant {
    fn default() -> Self {
        ModelVariant {
            kind: ModelKind::Vae,
            beta: 1.0,
            y_reg_weight: 0.0,
            decode_from_y: false,
            latent: LatentKind::Circle,
            sup_weight: 1.0,
        }
    }
}

impl ModelVariant {
    pub fn new(kind: ModelKind, beta: f64) -> Self {
        ModelVariant { kind, beta, ..ModelVariant::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ModelError::InvalidVariant(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.y_reg_weight >= 0.0 && self.y_reg_weight.is_finite()) {
            return Err(ModelError::InvalidVariant("y_reg_weight must be nonnegative".into()));
        }
        if !(self.sup_weight >= 0.0 && self.sup_weight.is_finite()) {
            return Err(ModelError::InvalidVariant("sup_weight must be nonnegative".into()));
        }
        if self.decode_from_y && !matches!(self.kind, ModelKind::Ae | ModelKind::Vae) {
            return Err(ModelError::InvalidVariant("decode_from_y needs an ae or vae model".into()));
        }
        Ok(())
    }

    /// Short human-readable name, e.g. `gf_vae(b=4)`.
    pub fn name(&self) -> String {
        let mut s = format!("{}(b={})", self.kind.label(), self.beta);
        if self.y_reg_weight > 0.0 {
            s.push_str(&format!("+yreg{}", self.y_reg_weight));
        }
        if self.decode_from_y {
            s.push_str("+from_y");
        }
        if self.latent == LatentKind::Torus {
            s.push_str("@torus");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Pixel intensities in [0, 1].
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Standard deviation of the Gaussian decoder likelihood.
    pub sigma_x: f64,
    pub output: OutputKind,
    pub flow_layers: usize,
    pub flow_bins: usize,
    pub harmonics: usize,
    pub channels: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoder_hidden: vec![128, 64],
            decoder_hidden: vec![64, 128],
            leaky_slope: 0.01,
            sigma_x: 0.1,
            output: OutputKind::Sigmoid,
            flow_layers: 1,
            flow_bins: 8,
            harmonics: 3,
            channels: 4,
        }
    }
}

impl Architecture {
    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig { bins: self.flow_bins, ..FlowConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Head {
    Projected { y: Dense, scale: Option<Dense> },
    Flow { params: Dense },
}

/// Per-row randomness for one loss evaluation: standard-normal draws for
/// wrapped-normal circles, uniform base points for flow circles.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub per_circle: Vec<Vec<f64>>,
}

impl Noise {
    pub fn sample<R: Rng + ?Sized>(model: &Model, rows: usize, rng: &mut R) -> Self {
        let per_circle = (0..model.circles())
            .map(|_| {
                (0..rows)
                    .map(|_| {
                        if model.variant.kind.is_flow() {
                            rng.random_range(-PI..PI)
                        } else {
                            StandardNormal.sample(rng)
                        }
                    })
                    .collect()
            })
            .collect();
        Noise { per_circle }
    }

    pub fn zeros(model: &Model, rows: usize) -> Self {
        Noise { per_circle: vec![vec![0.0; rows]; model.circles()] }
    }
}

/// Batch means of the loss terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Gaussian negative log-likelihood of the reconstruction.
    pub recon: f64,
    /// Single-sample KL estimate, summed over circles.
    pub kl: f64,
    pub kl_per_circle: Vec<f64>,
    pub y_reg: f64,
    pub sup: f64,
}

impl LossBreakdown {
    /// Negative ELBO with unit KL weight.
    pub fn neg_elbo(&self) -> f64 {
        self.recon + self.kl
    }
}

/// What the encoder produces for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Raw head outputs per circle: y ∈ ℝ² or the flow's raw parameters.
    pub y: Vec<Vec<f64>>,
    /// Posterior scale per circle (wrapped-normal models only).
    pub scale: Vec<f64>,
    pub representation: Representation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representation {
    Circle(CircleAngle),
    Torus(TorusPoint),
}

impl Representation {
    pub fn angles(&self) -> Vec<CircleAngle> {
        match *self {
            Representation::Circle(a) => vec![a],
            Representation::Torus(t) => vec![t.a, t.b],
        }
    }

    fn from_angles(a: &[CircleAngle]) -> Self {
        if a.len() == 1 {
            Representation::Circle(a[0])
        } else {
            Representation::Torus(TorusPoint { a: a[0], b: a[1] })
        }
    }
}

struct Graph {
    total: Var,
    recon: Var,
    kl: Vec<Var>,
    y_reg: Option<Var>,
    sup: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub variant: ModelVariant,
    pub arch: Architecture,
    pub input_dim: usize,
    pub store: ParamStore,
    /// Replaces the learned posterior scale with a constant.
    pub fixed_scale: Option<f64>,
    trunk: Mlp,
    heads: Vec<Head>,
    actions: Vec<ActionLayer>,
    decoder: Mlp,
}

impl Model {
    pub fn new(variant: ModelVariant, arch: Architecture, input_dim: usize, seed: u64) -> Result<Self, ModelError> {
        variant.validate()?;
        if arch.flow_layers == 0 || arch.flow_bins == 0 {
            return Err(ModelError::InvalidVariant("flow needs at least one layer and one bin".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let leaky = Activation::LeakyRelu(arch.leaky_slope);
        let mut sizes = vec![input_dim];
        sizes.extend(&arch.encoder_hidden);
        let trunk = Mlp::new(&mut store, "encoder.trunk", &sizes, leaky, leaky, &mut rng)?;
        let width = *sizes.last().unwrap_or(&input_dim);
        let circles = variant.latent.circles();
        let flow_len = arch.flow_layers * arch.flow_config().layer_len();

        let mut heads = Vec::with_capacity(circles);
        for c in 0..circles {
            heads.push(if variant.kind.is_flow() {
                Head::Flow { params: Dense::new(&mut store, &format!("encoder.head{c}.flow"), width, flow_len, &mut rng)? }
            } else {
                Head::Projected { y: Dense::new(&mut store, &format!("encoder.head{c}.y"), width, 2, &mut rng)?, scale: None }
            });
        }

        let mut actions = Vec::new();
        let mut feature_len = 0;
        for c in 0..circles {
            if variant.kind == ModelKind::ActionGfVae {
                let a = ActionLayer::new(&mut store, &format!("decoder.action{c}"), arch.harmonics, arch.channels, &mut rng)?;
                feature_len += a.feature_len();
                actions.push(a);
            } else {
                feature_len += 2;
            }
        }
        let mut sizes = vec![feature_len];
        sizes.extend(&arch.decoder_hidden);
        sizes.push(input_dim);
        let out_act = match arch.output {
            OutputKind::Sigmoid => Activation::Sigmoid,
            OutputKind::Linear => Activation::Identity,
        };
        let decoder = Mlp::new(&mut store, "decoder.mlp", &sizes, Activation::Elu, out_act, &mut rng)?;

        // Scale heads are created last so that a VAE and an AE built from
        // the same seed share every other parameter.
        if variant.kind.is_variational() && !variant.kind.is_flow() {
            for (c, head) in heads.iter_mut().enumerate() {
                if let Head::Projected { scale, .. } = head {
                    *scale = Some(Dense::new(&mut store, &format!("encoder.head{c}.scale"), width, 1, &mut rng)?);
                }
            }
        }
        Ok(Model { variant, arch, input_dim, store, fixed_scale: None, trunk, heads, actions, decoder })
    }

    pub fn circles(&self) -> usize {
        self.heads.len()
    }

    pub fn flow_params(&self, raw: &[f64]) -> Result<CircleFlowParams, FlowError> {
        CircleFlowParams::new(raw.to_vec(), self.arch.flow_layers, self.arch.flow_config())
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        if x.cols() != self.input_dim {
            return Err(ModelError::InputDim { expected: self.input_dim, got: x.cols() });
        }
        Ok(())
    }

    fn build(&self, tape: &Tape, x: &Tensor, labels: Option<&Tensor>, noise: &Noise) -> Result<Graph, ModelError> {
        self.check_input(x)?;
        let rows = x.rows();
        let xv = tape.input(x.clone());
        let h = self.trunk.forward(tape, &self.store, xv)?;
        let kind = self.variant.kind;
        let mut features = Vec::new();
        let mut kl = Vec::new();
        let mut y_reg_terms = Vec::new();
        let mut sup_terms = Vec::new();

        for (c, head) in self.heads.iter().enumerate() {
            let eps = &noise.per_circle[c];
            match head {
                Head::Projected { y, scale } => {
                    let yv = y.forward(tape, &self.store, h)?;
                    let norm = tape.sqrt(tape.sum_cols(tape.square(yv)));
                    let unit = tape.div_col(yv, norm)?;
                    y_reg_terms.push(tape.mean(tape.square(tape.add_scalar(norm, -1.0))));
                    if kind == ModelKind::SupVae {
                        let labels = labels.ok_or(ModelError::MissingLabels)?;
                        let truth: Vec<f64> = (0..rows)
                            .flat_map(|r| {
                                let t = labels.get(r, c);
                                [t.cos(), t.sin()]
                            })
                            .collect();
                        let truth = tape.input(Tensor::matrix(rows, 2, truth)?);
                        let dot = tape.sum_cols(tape.mul(unit, truth)?);
                        // ‖u − t‖² = 2 − 2⟨u, t⟩ for unit vectors.
                        sup_terms.push(tape.mean(tape.add_scalar(tape.scale(dot, -2.0), 2.0)));
                    }
                    let base = if self.variant.decode_from_y { yv } else { unit };
                    if !kind.is_variational() {
                        features.push(base);
                        continue;
                    }
                    let sigma = match (self.fixed_scale, scale) {
                        (Some(s), _) => tape.input(Tensor::filled(rows, 1, s)),
                        (None, Some(d)) => tape.activation(d.forward(tape, &self.store, h)?, Activation::Softplus),
                        (None, None) => return Err(ModelError::InvalidVariant("missing scale head".into())),
                    };
                    let eps = tape.input(Tensor::matrix(rows, 1, eps.clone())?);
                    let phi = tape.mul(sigma, eps)?;
                    let (cs, sn) = (tape.cos(phi), tape.sin(phi));
                    let b1 = tape.slice_cols(base, 0, 1)?;
                    let b2 = tape.slice_cols(base, 1, 2)?;
                    let r1 = tape.sub(tape.mul(b1, cs)?, tape.mul(b2, sn)?)?;
                    let r2 = tape.add(tape.mul(b1, sn)?, tape.mul(b2, cs)?)?;
                    features.push(tape.concat_cols(&[r1, r2])?);

                    let inputs = tape.concat_cols(&[phi, sigma])?;
                    let vals = tape.value(inputs);
                    let mut value = Vec::with_capacity(rows);
                    let mut jac = Vec::with_capacity(2 * rows);
                    for r in 0..rows {
                        let (p, s) = (vals.get(r, 0), vals.get(r, 1));
                        let (v, dp, ds) = wrapped_normal_log_density_jacobian(p, s, adaptive_truncation(s));
                        value.push(v + TAU.ln());
                        jac.extend([dp, ds]);
                    }
                    kl.push(tape.row_jacobian(inputs, Tensor::matrix(rows, 1, value)?, jac)?);
                }
                Head::Flow { params } => {
                    let raw = params.forward(tape, &self.store, h)?;
                    let raw_vals = tape.value(raw);
                    let l = raw_vals.cols();
                    let mut value = Vec::with_capacity(2 * rows);
                    let mut jac = Vec::with_capacity(2 * l * rows);
                    for r in 0..rows {
                        let p = self.flow_params(raw_vals.row(r))?;
                        let j = flow_forward_jacobian(eps[r], &p)?;
                        value.extend([j.z, j.log_det]);
                        jac.extend_from_slice(&j.dz);
                        jac.extend_from_slice(&j.dlog_det);
                    }
                    let out = tape.row_jacobian(raw, Tensor::matrix(rows, 2, value)?, jac)?;
                    let z = tape.slice_cols(out, 0, 1)?;
                    // Single-sample KL: log q(z) + log 2π = −log|det|.
                    kl.push(tape.neg(tape.slice_cols(out, 1, 2)?));
                    features.push(self.angle_features(tape, c, z)?);
                }
            }
        }

        let recon = self.reconstruction_nll(tape, xv, &features)?;
        let mut total = tape.mean(recon);
        let recon = total;
        if !kl.is_empty() && self.variant.beta != 0.0 {
            for &k in &kl {
                total = tape.add(total, tape.scale(tape.mean(k), self.variant.beta))?;
            }
        }
        let y_reg = sum_vars(tape, &y_reg_terms)?;
        if let Some(y) = y_reg {
            if self.variant.y_reg_weight > 0.0 {
                total = tape.add(total, tape.scale(y, self.variant.y_reg_weight))?;
            }
        }
        let sup = sum_vars(tape, &sup_terms)?;
        if let Some(s) = sup {
            total = tape.add(total, tape.scale(s, self.variant.sup_weight))?;
        }
        Ok(Graph { total, recon, kl, y_reg, sup })
    }

    /// Decoder input for a column of angles of circle `c`.
    fn angle_features(&self, tape: &Tape, c: usize, z: Var) -> Result<Var, ModelError> {
        if self.variant.kind == ModelKind::ActionGfVae {
            Ok(self.actions[c].forward(tape, &self.store, z)?)
        } else {
            Ok(tape.concat_cols(&[tape.cos(z), tape.sin(z)])?)
        }
    }

    /// Per-row Gaussian negative log-likelihood, as an [rows, 1] column.
    fn reconstruction_nll(&self, tape: &Tape, x: Var, features: &[Var]) -> Result<Var, ModelError> {
        let feat = if features.len() == 1 { features[0] } else { tape.concat_cols(features)? };
        let xhat = self.decoder.forward(tape, &self.store, feat)?;
        let sq = tape.sum_cols(tape.square(tape.sub(xhat, x)?));
        let s2 = self.arch.sigma_x * self.arch.sigma_x;
        let log_norm = 0.5 * self.input_dim as f64 * (TAU * s2).ln();
        Ok(tape.add_scalar(tape.scale(sq, 0.5 / s2), log_norm))
    }

    fn breakdown(&self, tape: &Tape, g: &Graph) -> LossBreakdown {
        let kl_per_circle: Vec<f64> = g.kl.iter().map(|&k| tape.scalar(tape.mean(k))).collect();
        LossBreakdown {
            total: tape.scalar(g.total),
            recon: tape.scalar(g.recon),
            kl: kl_per_circle.iter().sum(),
            kl_per_circle,
            y_reg: g.y_reg.map_or(0.0, |v| tape.scalar(v)),
            sup: g.sup.map_or(0.0, |v| tape.scalar(v)),
        }
    }

    /// Loss terms without touching gradients.
    pub fn loss(&self, x: &Tensor, labels: Option<&Tensor>, noise: &Noise) -> Result<LossBreakdown, ModelError> {
        let tape = Tape::new();
        let g = self.build(&tape, x, labels, noise)?;
        Ok(self.breakdown(&tape, &g))
    }

    /// Replaces the stored gradients with those of the loss.
    pub fn compute_gradients(&mut self, x: &Tensor, labels: Option<&Tensor>, noise: &Noise) -> Result<LossBreakdown, ModelError> {
        self.store.zero_grads();
        let tape = Tape::new();
        let g = self.build(&tape, x, labels, noise)?;
        let out = self.breakdown(&tape, &g);
        if !out.total.is_finite() {
            return Err(ModelError::NonFinite(format!("loss = {}", out.total)));
        }
        tape.backward(g.total, &mut self.store)?;
        Ok(out)
    }

    /// One optimizer update on a batch.
    pub fn train_step(
        &mut self,
        x: &Tensor,
        labels: Option<&Tensor>,
        noise: &Noise,
        opt: &mut OptimizerState,
    ) -> Result<LossBreakdown, ModelError> {
        let out = self.compute_gradients(x, labels, noise)?;
        let finite = self.store.iter().all(|p| p.tensor.grad.as_ref().is_some_and(|g| g.iter().all(|v| v.is_finite())));
        if !finite {
            return Err(ModelError::NonFinite("gradient".into()));
        }
        opt.radam_step(&mut self.store);
        Ok(out)
    }

    /// One optimizer update pulling the encoder towards prescribed
    /// intermediate points. Projected heads minimise the squared distance to
    /// `targets`; flow heads minimise a single-sample estimate of
    /// KL(q ‖ wrapped normal of scale `FLOW_TARGET_SCALE` at the target's
    /// angle), drawing base points from `noise`. `targets` holds one
    /// (y₁, y₂) pair per circle on every row. Returns the mean loss.
    pub fn encoder_target_step(
        &mut self,
        x: &Tensor,
        targets: &Tensor,
        noise: &Noise,
        opt: &mut OptimizerState,
    ) -> Result<f64, ModelError> {
        self.check_input(x)?;
        let rows = x.rows();
        if targets.rows() != rows || targets.cols() != 2 * self.circles() {
            return Err(ModelError::InputDim { expected: 2 * self.circles(), got: targets.cols() });
        }
        self.store.zero_grads();
        let tape = Tape::new();
        let xv = tape.input(x.clone());
        let h = self.trunk.forward(&tape, &self.store, xv)?;
        let mut terms = Vec::new();
        for (c, head) in self.heads.iter().enumerate() {
            match head {
                Head::Projected { y, .. } => {
                    let yv = y.forward(&tape, &self.store, h)?;
                    let t: Vec<f64> = (0..rows).flat_map(|r| [targets.get(r, 2 * c), targets.get(r, 2 * c + 1)]).collect();
                    let t = tape.input(Tensor::matrix(rows, 2, t)?);
                    terms.push(tape.mean(tape.sum_cols(tape.square(tape.sub(yv, t)?))));
                }
                Head::Flow { params } => {
                    let raw = params.forward(&tape, &self.store, h)?;
                    let raw_vals = tape.value(raw);
                    let l = raw_vals.cols();
                    let k = adaptive_truncation(FLOW_TARGET_SCALE);
                    let mut value = Vec::with_capacity(rows);
                    let mut jac = Vec::with_capacity(rows * l);
                    for r in 0..rows {
                        let j = flow_forward_jacobian(noise.per_circle[c][r], &self.flow_params(raw_vals.row(r))?)?;
                        // A target at the origin names no angle and contributes nothing.
                        match project_to_circle([targets.get(r, 2 * c), targets.get(r, 2 * c + 1)]) {
                            Ok(t) => {
                                let delta = CircleAngle::new(j.z).radians() - t.radians();
                                let (lp, dd, _) = wrapped_normal_log_density_jacobian(delta, FLOW_TARGET_SCALE, k);
                                value.push(-j.log_det - lp);
                                jac.extend(j.dlog_det.iter().zip(&j.dz).map(|(dl, dz)| -dl - dd * dz));
                            }
                            Err(_) => {
                                value.push(0.0);
                                jac.extend(std::iter::repeat_n(0.0, l));
                            }
                        }
                    }
                    terms.push(tape.mean(tape.row_jacobian(raw, Tensor::matrix(rows, 1, value)?, jac)?));
                }
            }
        }
        let total = sum_vars(&tape, &terms)?.expect("at least one circle");
        let loss = tape.scalar(total);
        if !loss.is_finite() {
            return Err(ModelError::NonFinite(format!("target loss = {loss}")));
        }
        tape.backward(total, &mut self.store)?;
        opt.radam_step(&mut self.store);
        Ok(loss)
    }

    /// Encoder outputs and representations, one per row of `x`.
    pub fn encode(&self, x: &Tensor) -> Result<Vec<EncoderOutput>, ModelError> {
        self.check_input(x)?;
        let tape = Tape::new();
        let xv = tape.input(x.clone());
        let h = self.trunk.forward(&tape, &self.store, xv)?;
        let mut per_head = Vec::new();
        for head in &self.heads {
            per_head.push(match head {
                Head::Projected { y, scale } => {
                    let yv = tape.value(y.forward(&tape, &self.store, h)?);
                    let sv = match (self.fixed_scale, scale) {
                        (Some(s), _) => Some(Tensor::filled(x.rows(), 1, s)),
                        (None, Some(d)) => {
                            Some(tape.value(tape.activation(d.forward(&tape, &self.store, h)?, Activation::Softplus)))
                        }
                        _ => None,
                    };
                    (yv, sv)
                }
                Head::Flow { params } => (tape.value(params.forward(&tape, &self.store, h)?), None),
            });
        }
        let mut out = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let mut ys = Vec::new();
            let mut scales = Vec::new();
            let mut angles = Vec::new();
            for (head, (yv, sv)) in self.heads.iter().zip(&per_head) {
                let row = yv.row(r).to_vec();
                angles.push(match head {
                    Head::Projected { .. } => project_to_circle([row[0], row[1]])?,
                    Head::Flow { .. } => find_mode(&self.flow_params(&row)?, ModeSearch::default())?,
                });
                if let Some(s) = sv {
                    scales.push(s.get(r, 0));
                }
                ys.push(row);
            }
            out.push(EncoderOutput { y: ys, scale: scales, representation: Representation::from_angles(&angles) });
        }
        Ok(out)
    }

    /// Decodes latent angles (one row per output, one column per circle).
    pub fn decode(&self, angles: &[Vec<CircleAngle>]) -> Result<Tensor, ModelError> {
        let rows = angles.len();
        let tape = Tape::new();
        let mut features = Vec::new();
        for c in 0..self.circles() {
            let z: Vec<f64> = angles.iter().map(|a| a[c].radians()).collect();
            let zv = tape.input(Tensor::matrix(rows, 1, z)?);
            features.push(self.angle_features(&tape, c, zv)?);
        }
        let feat = if features.len() == 1 { features[0] } else { tape.concat_cols(&features)? };
        Ok(tape.value(self.decoder.forward(&tape, &self.store, feat)?))
    }

    /// log q(z | x) of one circle factor for every row of `x`.
    pub fn circle_log_density(&self, x: &Tensor, circle: usize, z: &[CircleAngle]) -> Result<Vec<f64>, ModelError> {
        let enc = self.encode_heads(x)?;
        (0..x.rows())
            .map(|r| {
                let (y, s) = (&enc[r].y[circle], enc[r].scale.get(circle));
                match s {
                    Some(&scale) => {
                        let loc = project_to_circle([y[0], y[1]])?;
                        let delta = loc.inverse().compose(z[r]).radians();
                        Ok(wrapped_normal_log_density_jacobian(delta, scale, adaptive_truncation(scale)).0)
                    }
                    None => Ok(flow_log_density(z[r], &self.flow_params(y)?)?),
                }
            })
            .collect()
    }

    /// log q(z₁, z₂ | x) for a torus model: the factorized joint density.
    pub fn joint_log_density(&self, x: &Tensor, z: &[TorusPoint]) -> Result<Vec<f64>, ModelError> {
        if self.variant.latent != LatentKind::Torus {
            return Err(ModelError::NotTorus);
        }
        let a: Vec<CircleAngle> = z.iter().map(|t| t.a).collect();
        let b: Vec<CircleAngle> = z.iter().map(|t| t.b).collect();
        let qa = self.circle_log_density(x, 0, &a)?;
        let qb = self.circle_log_density(x, 1, &b)?;
        Ok(qa.iter().zip(&qb).map(|(p, q)| p + q).collect())
    }

    /// Raw head outputs without the mode search.
    fn encode_heads(&self, x: &Tensor) -> Result<Vec<EncoderOutput>, ModelError> {
        self.check_input(x)?;
        let tape = Tape::new();
        let xv = tape.input(x.clone());
        let h = self.trunk.forward(&tape, &self.store, xv)?;
        let mut ys = Vec::new();
        let mut ss = Vec::new();
        for head in &self.heads {
            match head {
                Head::Projected { y, scale } => {
                    ys.push(tape.value(y.forward(&tape, &self.store, h)?));
                    ss.push(match (self.fixed_scale, scale) {
                        (Some(s), _) => Some(Tensor::filled(x.rows(), 1, s)),
                        (None, Some(d)) => {
                            Some(tape.value(tape.activation(d.forward(&tape, &self.store, h)?, Activation::Softplus)))
                        }
                        _ => None,
                    });
                }
                Head::Flow { params } => {
                    ys.push(tape.value(params.forward(&tape, &self.store, h)?));
                    ss.push(None);
                }
            }
        }
        Ok((0..x.rows())
            .map(|r| EncoderOutput {
                y: ys.iter().map(|t| t.row(r).to_vec()).collect(),
                scale: ss.iter().filter_map(|s| s.as_ref().map(|t| t.get(r, 0))).collect(),
                representation: Representation::Circle(CircleAngle::IDENTITY),
            })
            .collect())
    }
}

fn sum_vars(tape: &Tape, vars: &[Var]) -> Result<Option<Var>, ModelError> {
    let Some((&first, rest)) = vars.split_first() else { return Ok(None) };
    let mut acc = first;
    for &v in rest {
        acc = tape.add(acc, v)?;
    }
    Ok(Some(acc))
}

/// Negated evidence lower bound for one batch with noise drawn from
/// `rng_seed`.
pub fn elbo_loss(x: &Tensor, model: &Model, rng_seed: u64) -> Result<f64, ModelError> {
    if !model.variant.kind.is_variational() {
        return Err(ModelError::InvalidVariant("the ELBO needs a variational model".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Noise::sample(model, x.rows(), &mut rng);
    Ok(model.loss(x, None, &noise)?.total)
}

/// Full objective of a torus model.
pub fn torus_objective(x: &Tensor, model: &Model, rng_seed: u64) -> Result<LossBreakdown, ModelError> {
    if model.variant.latent != LatentKind::Torus {
        return Err(ModelError::NotTorus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Noise::sample(model, x.rows(), &mut rng);
    model.loss(x, None, &noise)
}

/// (‖y‖ − 1)².
pub fn y_regularizer(y: [f64; 2]) -> f64 {
    (y[0].hypot(y[1]) - 1.0).powi(2)
}

/// Mean squared chordal distance between representations and ground truth.
pub fn supervised_loss(representation: &[CircleAngle], truth: &[CircleAngle]) -> Result<f64, ModelError> {
    if truth.len() != representation.len() || truth.is_empty() {
        return Err(ModelError::MissingLabels);
    }
    let total: f64 = representation.iter().zip(truth).map(|(&r, &t)| crate::geometry::chordal_distance_sq(r, t)).sum();
    Ok(total / truth.len() as f64)
}

#[cfg(test)]
mod tests;
