//! Wrapped-normal variational family on S¹ and its KL divergence to the
//! uniform prior.
//!
//! Samples are drawn by scaling a standard-normal draw in the Lie algebra,
//! mapping it to the group with `exp`, and left-multiplying by the mode.
//! Because exp on SO(2) has unit Jacobian, the exact density of the result is
//! the Gaussian summed over all 2π translates.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::{exp_so2, group_compose, log_so2, CircleAngle, GeometryError, TAU};
use crate::scalar::{log_sum_exp, Dual, Scalar};

pub const DEFAULT_WINDING_TRUNCATION: u32 = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("winding truncation must be at least 1")]
    InvalidTruncation,
    #[error("Monte-Carlo estimate needs at least one sample")]
    NoSamples,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedNormalParams {
    loc: CircleAngle,
    scale: f64,
    winding_truncation: u32,
}

impl WrappedNormalParams {
    pub fn new(loc: CircleAngle, scale: f64, winding_truncation: u32) -> Result<Self, DistributionError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DistributionError::InvalidScale(scale));
        }
        if winding_truncation < 1 {
            return Err(DistributionError::InvalidTruncation);
        }
        Ok(WrappedNormalParams { loc, scale, winding_truncation })
    }

    /// Chooses the truncation wide enough that the omitted winding terms are
    /// negligible: max(5, ⌈5σ/π⌉ + 3).
    pub fn with_adaptive_truncation(loc: CircleAngle, scale: f64) -> Result<Self, DistributionError> {
        Self::new(loc, scale, adaptive_truncation(scale))
    }

    pub fn loc(&self) -> CircleAngle {
        self.loc
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn winding_truncation(&self) -> u32 {
        self.winding_truncation
    }
}

pub fn adaptive_truncation(scale: f64) -> u32 {
    let needed = (5.0 * scale / PI).ceil() + 3.0;
    if needed.is_finite() {
        (needed as u32).max(DEFAULT_WINDING_TRUNCATION)
    } else {
        DEFAULT_WINDING_TRUNCATION
    }
}

/// z = loc · exp(σ ε).
pub fn sample_reparameterized(params: &WrappedNormalParams, eps: f64) -> Result<CircleAngle, DistributionError> {
    if !eps.is_finite() {
        return Err(GeometryError::NonFinite(eps).into());
    }
    let z_eps = exp_so2(params.scale * eps)?;
    Ok(group_compose(params.loc, z_eps))
}

/// Pathwise derivatives of the sample coordinate with respect to the mode
/// coordinate and the scale. Valid away from the wrap point.
pub fn sample_pathwise_gradient(_params: &WrappedNormalParams, eps: f64) -> (f64, f64) {
    (1.0, eps)
}

/// log density of a centered wrapped normal at Lie-algebra offset `delta`.
///
/// log Σ_{k=−K..K} N(δ + 2πk; 0, σ²).
pub fn wrapped_normal_log_density_offset<S: Scalar>(delta: S, scale: S, winding_truncation: u32) -> S {
    let k = winding_truncation as i64;
    let log_norm = scale.ln() + 0.5 * (TAU).ln();
    let inv_var = (scale * scale) * 2.0;
    let terms: Vec<S> = (-k..=k)
        .map(|w| {
            let d = delta + (w as f64) * TAU;
            -(d * d) / inv_var
        })
        .collect();
    log_sum_exp(&terms) - log_norm
}

/// Log density and whether the truncation window is suspected too narrow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedDensity {
    pub log_density: f64,
    /// Set when σ exceeds the winding truncation.
    pub truncation_warning: bool,
}

pub fn wrapped_normal_log_density(z: CircleAngle, params: &WrappedNormalParams) -> WrappedDensity {
    let delta = log_so2(group_compose(params.loc.inverse(), z));
    WrappedDensity {
        log_density: wrapped_normal_log_density_offset(delta, params.scale, params.winding_truncation),
        truncation_warning: params.scale > params.winding_truncation as f64,
    }
}

/// Value and partial derivatives (∂/∂δ, ∂/∂σ) of the centered log density.
pub fn wrapped_normal_log_density_jacobian(delta: f64, scale: f64, winding_truncation: u32) -> (f64, f64, f64) {
    let out = wrapped_normal_log_density_offset(Dual::<2>::var(delta, 0), Dual::<2>::var(scale, 1), winding_truncation);
    (out.v, out.d[0], out.d[1])
}

/// Monte-Carlo estimate of KL[q ‖ 𝒰(S¹)] = E_q[log q(z)] + log 2π.
pub fn kl_to_uniform(params: &WrappedNormalParams, n_samples: usize, rng_seed: u64) -> Result<f64, DistributionError> {
    if n_samples == 0 {
        return Err(DistributionError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let eps: f64 = StandardNormal.sample(&mut rng);
        let z = sample_reparameterized(params, eps)?;
        acc += wrapped_normal_log_density(z, params).log_density;
    }
    Ok(acc / n_samples as f64 + TAU.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(loc: f64, scale: f64, kw: u32) -> WrappedNormalParams {
        WrappedNormalParams::new(CircleAngle::new(loc), scale, kw).unwrap()
    }

    /// Periodic trapezoid rule on a uniform grid over one full turn.
    fn quadrature(p: &WrappedNormalParams, n: usize) -> f64 {
        let h = TAU / n as f64;
        (0..n)
            .map(|i| wrapped_normal_log_density(CircleAngle::new(-PI + i as f64 * h), p).log_density.exp())
            .sum::<f64>()
            * h
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_reparameterized(&params(0.3, 1.7, 5), 0.0).unwrap().radians(), 0.3);
        let z = sample_reparameterized(&params(PI, 1.0, 5), 0.5).unwrap();
        assert!((z.radians() - (-PI + 0.5)).abs() < 1e-12);
        let z = sample_reparameterized(&params(0.0, 2.0, 5), 1.0).unwrap();
        assert!((z.radians() - 2.0).abs() < 1e-15);
        assert!(sample_reparameterized(&params(0.0, 2.0, 5), f64::NAN).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(WrappedNormalParams::new(CircleAngle::new(0.0), 0.0, 5).is_err());
        assert!(WrappedNormalParams::new(CircleAngle::new(0.0), -1.0, 5).is_err());
        assert!(WrappedNormalParams::new(CircleAngle::new(0.0), 1.0, 0).is_err());
    }

    #[test]
    fn normalizes_by_quadrature() {
        assert!((quadrature(&params(0.4, 0.5, 5), 4096) - 1.0).abs() < 1e-6);
        for &s in &[0.1, 0.5, 1.0, 3.0] {
            let kw = ((5.0 * s / PI).ceil() + 3.0) as u32;
            let q = quadrature(&params(-1.1, s, kw), 4096);
            assert!((q - 1.0).abs() < 1e-6, "sigma={s}: {q}");
        }
    }

    #[test]
    fn large_scale_is_uniform() {
        let p = params(0.7, 50.0, 200);
        for &z in &[-3.0, -1.0, 0.0, 0.7, 2.5, PI] {
            let d = wrapped_normal_log_density(CircleAngle::new(z), &p);
            assert!((d.log_density + TAU.ln()).abs() < 1e-6);
            assert!(!d.truncation_warning);
        }
    }

    #[test]
    fn peak_value_for_narrow_scale() {
        let p = params(1.2, 0.1, 5);
        let d = wrapped_normal_log_density(CircleAngle::new(1.2), &p).log_density;
        let expected = (1.0 / (0.1 * TAU.sqrt())).ln();
        assert!((d - expected).abs() < 1e-9);
    }

    #[test]
    fn truncation_warning_reported() {
        let p = params(0.0, 8.0, 5);
        assert!(wrapped_normal_log_density(CircleAngle::new(0.0), &p).truncation_warning);
        assert!(adaptive_truncation(8.0) >= 16);
        assert_eq!(adaptive_truncation(0.1), DEFAULT_WINDING_TRUNCATION);
    }

    #[test]
    fn kl_limits() {
        let wide = params(0.0, 50.0, 200);
        let kl = kl_to_uniform(&wide, 100_000, 3).unwrap();
        assert!(kl.abs() < 0.01, "{kl}");

        let narrow = params(0.5, 0.1, 5);
        let kl = kl_to_uniform(&narrow, 100_000, 4).unwrap();
        let expected = TAU.ln() - (0.1 * (TAU * std::f64::consts::E).sqrt()).ln();
        assert!((kl - expected).abs() < 0.02, "{kl} vs {expected}");

        assert_eq!(kl_to_uniform(&narrow, 0, 1), Err(DistributionError::NoSamples));
        assert_eq!(kl_to_uniform(&narrow, 500, 9).unwrap(), kl_to_uniform(&narrow, 500, 9).unwrap());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for &(delta, s) in &[(0.3, 0.5), (-2.0, 1.3), (3.0, 0.2), (0.0, 4.0)] {
            let (v, dd, ds) = wrapped_normal_log_density_jacobian(delta, s, 8);
            let f = |d: f64, s: f64| wrapped_normal_log_density_offset(d, s, 8);
            assert!((v - f(delta, s)).abs() < 1e-14);
            let h = 1e-6;
            let fd_d = (f(delta + h, s) - f(delta - h, s)) / (2.0 * h);
            let fd_s = (f(delta, s + h) - f(delta, s - h)) / (2.0 * h);
            assert!((dd - fd_d).abs() <= 1e-6 * fd_d.abs().max(1e-3), "{dd} {fd_d}");
            assert!((ds - fd_s).abs() <= 1e-6 * fd_s.abs().max(1e-3), "{ds} {fd_s}");
        }
    }

    proptest! {
        #[test]
        fn density_left_invariant(z in -PI..PI, m in -PI..PI, c in -PI..PI, s in 0.05f64..3.0) {
            let c = CircleAngle::new(c);
            let p = params(m, s, adaptive_truncation(s));
            let shifted = WrappedNormalParams::new(c.compose(CircleAngle::new(m)), s, adaptive_truncation(s)).unwrap();
            let a = wrapped_normal_log_density(CircleAngle::new(z), &p).log_density;
            let b = wrapped_normal_log_density(c.compose(CircleAngle::new(z)), &shifted).log_density;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn pathwise_gradient_matches_finite_differences(m in -2.5f64..2.5, s in 0.05f64..0.5, eps in -1.0f64..1.0) {
            // Stay away from the wrap point so the coordinate is smooth.
            prop_assume!((m + s * eps).abs() < PI - 0.1);
            let h = 1e-6;
            let at = |m: f64, s: f64| sample_reparameterized(&params(m, s, 5), eps).unwrap().radians();
            let (dm, ds) = sample_pathwise_gradient(&params(m, s, 5), eps);
            let fd_m = (at(m + h, s) - at(m - h, s)) / (2.0 * h);
            let fd_s = (at(m, s + h) - at(m, s - h)) / (2.0 * h);
            prop_assert!((dm - fd_m).abs() <= 1e-6 * fd_m.abs().max(1e-2));
            prop_assert!((ds - fd_s).abs() <= 1e-6 * fd_s.abs().max(1e-2));
        }
    }
}
