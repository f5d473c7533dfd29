//! Latent traversals: decoded outputs at evenly spaced latent angles, plus
//! the encoder's y and z traces along the data circle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{build_model, encode_path};
use super::sweep::write_atomic;
use super::{ExperimentConfig, ExperimentError};
use crate::datasets::{uniform_grid, DatasetKind};
use crate::geometry::CircleAngle;
use crate::models::{read_checkpoint, Model};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalArtifact {
    /// Decoded outputs, one row per latent point.
    pub decoded: Vec<Tensor>,
    pub files: Vec<PathBuf>,
}

/// Rebuilds the model stored in a checkpoint written by a run of `config`.
pub fn load_model(config: &ExperimentConfig, checkpoint: &Path) -> Result<Model, ExperimentError> {
    let ckpt = read_checkpoint(checkpoint)?;
    let seed = config
        .seeds
        .iter()
        .copied()
        .find(|&s| config.run_echo(s) == ckpt.config_echo)
        .ok_or_else(|| ExperimentError::ResumeMismatch(checkpoint.to_path_buf()))?;
    let input_dim = input_dim(config);
    let mut model = build_model(config, input_dim, seed)?;
    ckpt.restore(&mut model)?;
    Ok(model)
}

pub fn input_dim(config: &ExperimentConfig) -> usize {
    let d = &config.dataset;
    match d.kind {
        DatasetKind::RotatedSprite => d.image_size * d.image_size * if d.circles() == 2 { 3 } else { 1 },
        DatasetKind::SyntheticEmbedding => d.ambient_dim,
    }
}

/// Decodes `n_points` evenly spaced angles and writes image grids (sprite
/// data) and CSV files into `out_dir`. Torus models get one traversal per
/// factor with the other held at zero.
pub fn export_traversal(
    config: &ExperimentConfig,
    checkpoint: &Path,
    n_points: usize,
    out_dir: &Path,
) -> Result<TraversalArtifact, ExperimentError> {
    let model = load_model(config, checkpoint)?;
    export_model_traversal(config, &model, n_points, out_dir)
}

pub fn export_model_traversal(
    config: &ExperimentConfig,
    model: &Model,
    n_points: usize,
    out_dir: &Path,
) -> Result<TraversalArtifact, ExperimentError> {
    if n_points == 0 {
        return Err(ExperimentError::ConfigInvalid("a traversal needs at least one point".into()));
    }
    fs::create_dir_all(out_dir)?;
    let grid = uniform_grid(n_points);
    let zero = CircleAngle::IDENTITY;
    let traversals: Vec<(String, Vec<Vec<CircleAngle>>)> = if model.circles() == 2 {
        vec![
            ("traversal_fix_a".into(), grid.iter().map(|&g| vec![zero, g]).collect()),
            ("traversal_fix_b".into(), grid.iter().map(|&g| vec![g, zero]).collect()),
        ]
    } else {
        vec![("traversal".into(), grid.iter().map(|&g| vec![g]).collect())]
    };
    let mut decoded = Vec::new();
    let mut files = Vec::new();
    for (name, angles) in traversals {
        let out = model.decode(&angles)?;
        let mut csv = String::from("point");
        for c in 0..angles[0].len() {
            let _ = write!(csv, ",z{c}");
        }
        for i in 0..out.cols() {
            let _ = write!(csv, ",x{i}");
        }
        csv.push('\n');
        for (r, a) in angles.iter().enumerate() {
            let _ = write!(csv, "{r}");
            for z in a {
                let _ = write!(csv, ",{}", z.radians());
            }
            for v in out.row(r) {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        let csv_path = out_dir.join(format!("{name}.csv"));
        write_atomic(&csv_path, csv.as_bytes())?;
        files.push(csv_path);
        if config.dataset.kind == DatasetKind::RotatedSprite {
            let size = config.dataset.image_size;
            let channels = out.cols() / (size * size);
            let ext = if channels == 3 { "ppm" } else { "pgm" };
            let img_path = out_dir.join(format!("{name}.{ext}"));
            write_atomic(&img_path, &image_strip(&out, size, channels))?;
            files.push(img_path);
        }
        decoded.push(out);
    }
    if model.circles() == 1 {
        let path = encode_path(model, &config.dataset, config.eval_path_samples)?;
        let mut csv = String::from("source,y1,y2,z\n");
        for i in 0..path.len() {
            let y = path.y_trace().map_or([f64::NAN, f64::NAN], |t| t[i]);
            let _ = writeln!(csv, "{},{},{},{}", path.source()[i].radians(), y[0], y[1], path.encoded()[i].radians());
        }
        let trace_path = out_dir.join("encoder_trace.csv");
        write_atomic(&trace_path, csv.as_bytes())?;
        files.push(trace_path);
    }
    Ok(TraversalArtifact { decoded, files })
}

/// Binary PGM (one channel) or PPM (three interleaved channels) with the
/// images laid out side by side.
pub fn image_strip(images: &Tensor, size: usize, channels: usize) -> Vec<u8> {
    let n = images.rows();
    let width = n * size;
    let magic = if channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{width} {size}\n255\n").into_bytes();
    for row in 0..size {
        for img in 0..n {
            let values = images.row(img);
            for col in 0..size {
                for ch in 0..channels {
                    let v = values[(row * size + col) * channels + ch];
                    out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    out
}
