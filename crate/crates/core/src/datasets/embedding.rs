//! Random smooth embeddings of the circle into ℝⁿ given by trigonometric
//! polynomials, redrawn until they are injective at grid resolution.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DatasetError;
use crate::geometry::{CircleAngle, TAU};

pub const INJECTIVITY_GRID: usize = 720;
pub const MAX_REDRAWS: usize = 100;
/// Minimum separation of non-neighbouring grid points, relative to the
/// embedding diameter.
pub const DEFAULT_SEPARATION: f64 = 0.05;
/// Grid points closer than this on the source circle are neighbours and are
/// not compared.
pub const NEIGHBOUR_EXCLUSION: f64 = std::f64::consts::PI / 8.0;

/// x(θ) = Σ_h A_h cos(hθ) + B_h sin(hθ) for h = 1..=H.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMap {
    cos_coeffs: Vec<Vec<f64>>,
    sin_coeffs: Vec<Vec<f64>>,
}

impl SyntheticMap {
    pub fn new(cos_coeffs: Vec<Vec<f64>>, sin_coeffs: Vec<Vec<f64>>) -> Result<Self, DatasetError> {
        let dim = cos_coeffs.first().map_or(0, Vec::len);
        if dim < 3 {
            return Err(DatasetError::AmbientDimTooSmall(dim));
        }
        let consistent = cos_coeffs.len() == sin_coeffs.len()
            && !cos_coeffs.is_empty()
            && cos_coeffs.iter().chain(&sin_coeffs).all(|v| v.len() == dim);
        if !consistent {
            return Err(DatasetError::InvalidSpec("coefficient arrays must share one shape".into()));
        }
        Ok(SyntheticMap { cos_coeffs, sin_coeffs })
    }

    /// Draws coefficients with entries N(0, 1/h²) at harmonic h, redrawing
    /// until no two non-neighbouring points of a 720-point grid are closer
    /// than `separation` times the embedding diameter.
    pub fn generate<R: Rng + ?Sized>(
        ambient_dim: usize,
        harmonics: usize,
        separation: f64,
        rng: &mut R,
    ) -> Result<Self, DatasetError> {
        if ambient_dim < 3 {
            return Err(DatasetError::AmbientDimTooSmall(ambient_dim));
        }
        if harmonics == 0 {
            return Err(DatasetError::InvalidSpec("need at least one harmonic".into()));
        }
        for _ in 0..MAX_REDRAWS {
            let mut draw = |h: usize| -> Vec<f64> {
                (0..ambient_dim).map(|_| { let v: f64 = StandardNormal.sample(rng); v / h as f64 }).collect::<Vec<f64>>()
            };
            let cos_coeffs: Vec<Vec<f64>> = (1..=harmonics).map(&mut draw).collect();
            let sin_coeffs: Vec<Vec<f64>> = (1..=harmonics).map(&mut draw).collect();
            let map = SyntheticMap { cos_coeffs, sin_coeffs };
            let (min_sep, diameter) = map.separation_stats();
            if min_sep >= separation * diameter {
                return Ok(map);
            }
        }
        Err(DatasetError::InjectivityRejectionExceeded(MAX_REDRAWS))
    }

    pub fn ambient_dim(&self) -> usize {
        self.cos_coeffs[0].len()
    }

    pub fn harmonics(&self) -> usize {
        self.cos_coeffs.len()
    }

    pub fn embed(&self, theta: CircleAngle) -> Vec<f64> {
        let mut x = vec![0.0; self.ambient_dim()];
        for (h, (a, b)) in self.cos_coeffs.iter().zip(&self.sin_coeffs).enumerate() {
            let (s, c) = ((h + 1) as f64 * theta.radians()).sin_cos();
            for (xi, (ai, bi)) in x.iter_mut().zip(a.iter().zip(b)) {
                *xi += ai * c + bi * s;
            }
        }
        x
    }

    /// Minimum distance between non-neighbouring grid points and the largest
    /// distance between any two grid points.
    pub fn separation_stats(&self) -> (f64, f64) {
        let n = INJECTIVITY_GRID;
        let pts: Vec<Vec<f64>> = (0..n).map(|i| self.embed(CircleAngle::new(TAU * i as f64 / n as f64))).collect();
        let exclude = (NEIGHBOUR_EXCLUSION / (TAU / n as f64)).round() as usize;
        let mut min_sep = f64::INFINITY;
        let mut diameter: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                diameter = diameter.max(d);
                let gap = (j - i).min(n - (j - i));
                if gap > exclude {
                    min_sep = min_sep.min(d);
                }
            }
        }
        (min_sep, diameter)
    }
}
