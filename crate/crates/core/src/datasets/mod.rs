//! Procedural datasets whose underlying manifold is a circle or a torus:
//! rotated raster sprites (optionally hue-rotated) and random smooth
//! embeddings of the circle, each sample carrying its ground-truth angles.

mod embedding;
mod io;
mod sprite;

pub use embedding::{SyntheticMap, DEFAULT_SEPARATION, INJECTIVITY_GRID, MAX_REDRAWS, NEIGHBOUR_EXCLUSION};
pub use io::{export_csv, load_dataset, save_dataset, DATASET_VERSION};
pub use sprite::{base_sprite, hue_color, rotated_intensity, rotated_sprite, MAX_SPRITE_SIZE, MIN_SPRITE_SIZE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CircleAngle, TorusPoint, TAU};
use crate::nn::{NnError, Tensor};

/// Largest sprite edge accepted in a dataset spec.
pub const MAX_DATASET_IMAGE_SIZE: usize = 24;
pub const MIN_SAMPLES: usize = 64;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("ambient dimension must be at least 3, got {0}")]
    AmbientDimTooSmall(usize),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("no injective embedding found after {0} draws")]
    InjectivityRejectionExceeded(usize),
    #[error("dataset file is corrupt: {0}")]
    Corrupt(String),
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u32),
    #[error("sample index {0} out of range")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    RotatedSprite,
    SyntheticEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleSampling {
    #[default]
    UniformGrid,
    UniformRandom,
}

/// Second circle factor of a torus dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorusFactor {
    #[default]
    None,
    Hue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub image_size: usize,
    pub ambient_dim: usize,
    pub harmonics: usize,
    pub n_samples: usize,
    pub angle_sampling: AngleSampling,
    pub torus: TorusFactor,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: DatasetKind::RotatedSprite,
            image_size: 16,
            ambient_dim: 16,
            harmonics: 3,
            n_samples: 360,
            angle_sampling: AngleSampling::UniformGrid,
            torus: TorusFactor::None,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_samples < MIN_SAMPLES {
            return Err(DatasetError::InvalidSpec(format!("need at least {MIN_SAMPLES} samples, got {}", self.n_samples)));
        }
        match self.kind {
            DatasetKind::RotatedSprite => {
                if !(MIN_SPRITE_SIZE..=MAX_DATASET_IMAGE_SIZE).contains(&self.image_size) {
                    return Err(DatasetError::InvalidSpec(format!(
                        "image size must lie in {MIN_SPRITE_SIZE}..={MAX_DATASET_IMAGE_SIZE}, got {}",
                        self.image_size
                    )));
                }
            }
            DatasetKind::SyntheticEmbedding => {
                if self.ambient_dim < 3 {
                    return Err(DatasetError::AmbientDimTooSmall(self.ambient_dim));
                }
                if self.torus != TorusFactor::None {
                    return Err(DatasetError::InvalidSpec("synthetic embeddings have a single circle".into()));
                }
            }
        }
        if self.torus != TorusFactor::None && self.angle_sampling == AngleSampling::UniformGrid {
            let m = grid_side(self.n_samples);
            if m * m != self.n_samples {
                return Err(DatasetError::InvalidSpec(format!(
                    "a torus grid needs a square sample count, got {}",
                    self.n_samples
                )));
            }
        }
        Ok(())
    }

    pub fn circles(&self) -> usize {
        if self.torus == TorusFactor::None {
            1
        } else {
            2
        }
    }
}

fn grid_side(n: usize) -> usize {
    (n as f64).sqrt().round() as usize
}

/// Ground-truth manifold coordinates of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Circle(CircleAngle),
    Torus(TorusPoint),
}

impl Truth {
    pub fn angles(&self) -> Vec<CircleAngle> {
        match *self {
            Truth::Circle(a) => vec![a],
            Truth::Torus(t) => vec![t.a, t.b],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub dim: usize,
    x: Vec<f64>,
    truth: Vec<Truth>,
}

/// `n` evenly spaced angles −π + 2π·i/n for i = 1..=n.
pub fn uniform_grid(n: usize) -> Vec<CircleAngle> {
    (1..=n).map(|i| CircleAngle::new(-std::f64::consts::PI + TAU * i as f64 / n as f64)).collect()
}

fn random_angles<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<CircleAngle> {
    (0..n).map(|_| CircleAngle::new(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))).collect()
}

fn draw_map(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Result<Option<SyntheticMap>, DatasetError> {
    Ok(match spec.kind {
        DatasetKind::SyntheticEmbedding => {
            Some(SyntheticMap::generate(spec.ambient_dim, spec.harmonics, DEFAULT_SEPARATION, rng)?)
        }
        DatasetKind::RotatedSprite => None,
    })
}

fn render(spec: &DatasetSpec, map: Option<&SyntheticMap>, truth: Vec<Truth>) -> Result<Dataset, DatasetError> {
    if truth.is_empty() {
        return Err(DatasetError::InvalidSpec("no samples".into()));
    }
    let mut x = Vec::new();
    let base = (spec.kind == DatasetKind::RotatedSprite).then(|| base_sprite(spec.image_size));
    for t in &truth {
        match (t, map, &base) {
            (Truth::Circle(a), Some(m), _) => x.extend(m.embed(*a)),
            (Truth::Circle(a), None, Some(b)) => x.extend(sprite::rotate_image(b, spec.image_size, *a)),
            (Truth::Torus(p), None, Some(b)) => {
                let intensity = sprite::rotate_image(b, spec.image_size, p.a);
                let color = hue_color(p.b);
                x.extend(intensity.iter().flat_map(|&v| color.map(|c| v * c)));
            }
            _ => return Err(DatasetError::InvalidSpec("truth does not match the dataset kind".into())),
        }
    }
    let dim = x.len() / truth.len();
    Ok(Dataset { spec: spec.clone(), dim, x, truth })
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self, DatasetError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let map = draw_map(spec, &mut rng)?;
        let n = spec.n_samples;
        let truth: Vec<Truth> = match (spec.torus, spec.angle_sampling) {
            (TorusFactor::None, AngleSampling::UniformGrid) => uniform_grid(n).into_iter().map(Truth::Circle).collect(),
            (TorusFactor::None, AngleSampling::UniformRandom) => {
                random_angles(n, &mut rng).into_iter().map(Truth::Circle).collect()
            }
            (TorusFactor::Hue, AngleSampling::UniformGrid) => {
                let g = uniform_grid(grid_side(n));
                g.iter().flat_map(|&a| g.iter().map(move |&b| Truth::Torus(TorusPoint { a, b }))).collect()
            }
            (TorusFactor::Hue, AngleSampling::UniformRandom) => {
                let a = random_angles(n, &mut rng);
                let b = random_angles(n, &mut rng);
                a.into_iter().zip(b).map(|(a, b)| Truth::Torus(TorusPoint { a, b })).collect()
            }
        };
        render(spec, map.as_ref(), truth)
    }

    /// Samples of the manifold described by `spec` at prescribed truth
    /// values. Synthetic embeddings use the same map as [`Dataset::generate`].
    /// The sample-count and sampling fields of `spec` are ignored.
    pub fn at_truth(spec: &DatasetSpec, truth: Vec<Truth>) -> Result<Self, DatasetError> {
        DatasetSpec { n_samples: MIN_SAMPLES.max(spec.n_samples), angle_sampling: AngleSampling::UniformRandom, ..spec.clone() }
            .validate()?;
        let expected = spec.circles();
        if truth.iter().any(|t| t.angles().len() != expected) {
            return Err(DatasetError::InvalidSpec(format!("truth values must have {expected} angle(s)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let map = draw_map(spec, &mut rng)?;
        render(spec, map.as_ref(), truth)
    }

    pub(crate) fn from_parts(spec: DatasetSpec, dim: usize, x: Vec<f64>, truth: Vec<Truth>) -> Self {
        Dataset { spec, dim, x, truth }
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn circles(&self) -> usize {
        self.spec.circles()
    }

    pub fn sample(&self, i: usize) -> Result<Sample<'_>, DatasetError> {
        let truth = *self.truth.get(i).ok_or(DatasetError::IndexOutOfRange(i))?;
        Ok(Sample { x: &self.x[i * self.dim..(i + 1) * self.dim], truth })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn truth(&self) -> &[Truth] {
        &self.truth
    }

    /// Rows of `x` for the given sample indices.
    pub fn x_tensor(&self, indices: &[usize]) -> Result<Tensor, DatasetError> {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.sample(i)?.x);
        }
        Ok(Tensor::matrix(indices.len(), self.dim, values)?)
    }

    /// Ground-truth angles (one column per circle factor) for the given
    /// sample indices.
    pub fn label_tensor(&self, indices: &[usize]) -> Result<Tensor, DatasetError> {
        let mut values = Vec::with_capacity(indices.len() * self.circles());
        for &i in indices {
            values.extend(self.sample(i)?.truth.angles().iter().map(|a| a.radians()));
        }
        Ok(Tensor::matrix(indices.len(), self.circles(), values)?)
    }
}
