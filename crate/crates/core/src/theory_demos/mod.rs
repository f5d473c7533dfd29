//! Numerical checks of the geometric facts behind projected encoders: norm
//! growth under tangential gradient steps, expected norm growth of random
//! steps, the largest angle a positive diagonal map can turn a vector by,
//! winding-number invariance under small steps, and the figure-8 escape
//! experiment.

mod figure8;
mod winding;

pub use figure8::{
    figure8_escape_experiment, figure8_target, fit_figure8, EscapeSummary, Figure8Config, Figure8Epoch, Figure8Trace,
    FIGURE8_CLASS, HOMEOMORPHIC_CLASS,
};
pub use winding::{
    perturbed_circle, run_winding_demos, winding_invariance_run, write_winding_trace, PlanarMap, WindingStep, WindingTrace,
};

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::experiments::ExperimentError;
use crate::geometry::TAU;
use crate::topology_metrics::TopologyError;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("the demo needs a nonzero vector")]
    ZeroVector,
    #[error("invalid demo input: {0}")]
    InvalidInput(String),
    #[error("the curve came within {margin} of the origin at step {step}, closer than that step moved it")]
    OriginCrossed { step: usize, margin: f64, trace: WindingTrace },
    #[error("winding changed at step {0} although the origin margin held")]
    WindingChanged(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of one demo: measured against predicted values.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoResult {
    pub name: String,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub trace: Option<PathBuf>,
}

impl DemoResult {
    pub fn new(name: &str, measured: Vec<f64>, predicted: Vec<f64>, tolerance: f64) -> Self {
        let pass = measured.len() == predicted.len()
            && measured.iter().zip(&predicted).all(|(m, p)| (m - p).abs() <= tolerance);
        DemoResult { name: name.to_string(), measured, predicted, tolerance, pass, trace: None }
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}: measured {:?} predicted {:?} (tolerance {:e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.predicted,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeGrowth {
    pub initial_norm_sq: f64,
    /// ‖y − η∇‖² after one discrete step.
    pub stepped_norm_sq: f64,
    /// Closed form ‖y‖²(1 + η²).
    pub predicted_norm_sq: f64,
    /// ‖y‖² after following the gradient flow for the same time.
    pub flow_norm_sq: f64,
}

/// Gradient of L(y) = s·r₀²·atan2(y₂, y₁), a loss of the angle alone; at
/// ‖y‖ = r₀ it is the tangent vector s·(−y₂, y₁).
fn angle_loss_gradient(y: [f64; 2], r0_sq: f64, sign: f64) -> [f64; 2] {
    let n2 = y[0] * y[0] + y[1] * y[1];
    [-sign * r0_sq * y[1] / n2, sign * r0_sq * y[0] / n2]
}

pub const FLOW_SUBSTEPS: usize = 10_000;

/// One gradient step of size `eta` on a loss that depends only on y/‖y‖,
/// with the gradient scaled to magnitude ‖y‖, compared to the gradient flow
/// integrated over the same time with RK4.
pub fn magnitude_growth_step(y: [f64; 2], eta: f64) -> Result<MagnitudeGrowth, DemoError> {
    let r0_sq = y[0] * y[0] + y[1] * y[1];
    if r0_sq == 0.0 {
        return Err(DemoError::ZeroVector);
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(DemoError::InvalidInput(format!("step size must be nonnegative, got {eta}")));
    }
    let g = angle_loss_gradient(y, r0_sq, 1.0);
    let stepped = [y[0] - eta * g[0], y[1] - eta * g[1]];

    let h = eta / FLOW_SUBSTEPS as f64;
    let f = |p: [f64; 2]| {
        let g = angle_loss_gradient(p, r0_sq, 1.0);
        [-g[0], -g[1]]
    };
    let mut p = y;
    for _ in 0..FLOW_SUBSTEPS {
        let k1 = f(p);
        let k2 = f([p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]]);
        let k3 = f([p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]]);
        let k4 = f([p[0] + h * k3[0], p[1] + h * k3[1]]);
        for i in 0..2 {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(MagnitudeGrowth {
        initial_norm_sq: r0_sq,
        stepped_norm_sq: stepped[0] * stepped[0] + stepped[1] * stepped[1],
        predicted_norm_sq: r0_sq * (1.0 + eta * eta),
        flow_norm_sq: p[0] * p[0] + p[1] * p[1],
    })
}

/// Monte-Carlo estimate of E‖y + v‖² for ‖y‖ = R and steps v of length L
/// whose direction deviates from the tangent of the circle at y by an angle
/// uniform in [−θ, θ].
pub fn expected_norm_growth_mc(
    radius: f64,
    step: f64,
    theta_max: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64, DemoError> {
    if !(theta_max > 0.0 && theta_max <= FRAC_PI_2) {
        return Err(DemoError::InvalidInput(format!("theta_max must lie in (0, π/2], got {theta_max}")));
    }
    if n_samples == 0 {
        return Err(DemoError::InvalidInput("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = [radius, 0.0];
    let norm_sq = |phi: f64| {
        // Tangent at y is (0, 1); rotate it by φ.
        let v = [-step * phi.sin(), step * phi.cos()];
        (y[0] + v[0]).powi(2) + (y[1] + v[1]).powi(2)
    };
    // Mean as an offset from the first sample, exact when all samples agree.
    let first = norm_sq(rng.random_range(-theta_max..=theta_max));
    let mut acc = 0.0;
    for _ in 1..n_samples {
        acc += norm_sq(rng.random_range(-theta_max..=theta_max)) - first;
    }
    Ok(first + acc / n_samples as f64)
}

pub const MAX_ANGLE_SAMPLES: usize = 1_000_000;

/// Largest angle between x and diag(λ₁, λ₂)·x: the closed form
/// acos(2√(λ₁λ₂)/(λ₁+λ₂)) and a scan over evenly spaced unit vectors.
pub fn max_angle_check(lambda1: f64, lambda2: f64) -> Result<(f64, f64), DemoError> {
    if !(lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return Err(DemoError::InvalidInput("eigenvalues must be positive".into()));
    }
    let formula = (2.0 * (lambda1 * lambda2).sqrt() / (lambda1 + lambda2)).min(1.0).acos();
    let mut best: f64 = 0.0;
    for i in 0..MAX_ANGLE_SAMPLES {
        let t = TAU * i as f64 / MAX_ANGLE_SAMPLES as f64;
        let (s, c) = t.sin_cos();
        let (mx, my) = (lambda1 * c, lambda2 * s);
        let angle = (c * my - s * mx).abs().atan2(c * mx + s * my);
        best = best.max(angle);
    }
    Ok((formula, best))
}

/// The closed-form checks with their fixed example inputs.
pub fn run_closed_form_demos() -> Result<Vec<DemoResult>, DemoError> {
    let mut out = Vec::new();
    for (y, eta, expected) in [([0.0, 1.0], 0.1, 1.01), ([3.0, 4.0], 0.5, 31.25)] {
        let m = magnitude_growth_step(y, eta)?;
        out.push(DemoResult::new(
            &format!("tangential step from {y:?} with eta {eta}"),
            vec![m.stepped_norm_sq, m.flow_norm_sq],
            vec![expected, m.initial_norm_sq],
            1e-6 * expected,
        ));
    }
    for (r, l, theta, tol) in [(1.0, 0.5, std::f64::consts::FRAC_PI_4, 0.01), (2.0, 1.0, std::f64::consts::FRAC_PI_6, 0.02)] {
        let est = expected_norm_growth_mc(r, l, theta, 1_000_000, 0)?;
        out.push(DemoResult::new(
            &format!("expected norm growth R={r} L={l}"),
            vec![est],
            vec![r * r + l * l],
            tol,
        ));
    }
    for (l1, l2) in [(4.0, 1.0), (100.0, 1.0)] {
        let (formula, brute) = max_angle_check(l1, l2)?;
        out.push(DemoResult::new(&format!("max angle diag({l1}, {l2})"), vec![brute], vec![formula], 1e-4));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
