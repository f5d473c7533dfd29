//! Single training run: deterministic mini-batch training with optional
//! checkpoint resume, followed by topology evaluation on a fresh path.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, ExperimentError};
use crate::datasets::{uniform_grid, Dataset, DatasetSpec, Truth};
use crate::geometry::{CircleAngle, TorusPoint};
use crate::models::{read_checkpoint, write_checkpoint, Checkpoint, LossBreakdown, Model, ModelError, ModelKind, Noise};
use crate::nn::{OptimizerState, RAdamConfig};
use crate::topology_metrics::{
    torus_continuity_score, torus_homeomorphism_verdict, Crossings, CyclicOrder, EncodedPath, TopologyReport, Winding,
    DEFAULT_PERCENTILE,
};

/// Runs whose final KL falls below this many nats on any circle count as
/// collapsed.
pub const COLLAPSE_KL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub variant: String,
    pub beta: f64,
    pub final_loss: f64,
    /// Negative ELBO (β = 1) on the training set.
    pub neg_loglik: f64,
    pub kl_per_circle: Vec<f64>,
    pub report: TopologyReport,
    pub checkpoint: Option<PathBuf>,
    pub wall_time_secs: f64,
    pub history: Vec<EpochStats>,
}

/// Everything a finished run leaves behind in memory.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: Model,
    pub optimizer: OptimizerState,
    pub record: RunRecord,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

pub fn optimizer_config(config: &ExperimentConfig) -> RAdamConfig {
    RAdamConfig { learning_rate: config.learning_rate, ..RAdamConfig::default() }
}

pub fn build_model(config: &ExperimentConfig, input_dim: usize, seed: u64) -> Result<Model, ExperimentError> {
    Ok(Model::new(config.variant, config.architecture.clone(), input_dim, seed)?)
}

/// Loss terms over the whole dataset with evaluation noise from `seed`.
pub fn dataset_loss(model: &Model, data: &Dataset, seed: u64) -> Result<LossBreakdown, ExperimentError> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let x = data.x_tensor(&idx)?;
    let labels = data.label_tensor(&idx)?;
    let noise = Noise::sample(model, idx.len(), &mut eval_rng(seed));
    Ok(model.loss(&x, Some(&labels), &noise)?)
}

/// One pass over the data in a seed- and epoch-determined order. Returns
/// `None` when the loss or gradients become non-finite.
pub fn train_epoch(
    model: &mut Model,
    opt: &mut OptimizerState,
    data: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Option<EpochStats>, ExperimentError> {
    let mut rng = epoch_rng(seed, epoch);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let needs_labels = model.variant.kind == ModelKind::SupVae;
    let (mut loss, mut recon, mut kl) = (0.0, 0.0, 0.0);
    for batch in order.chunks(batch_size) {
        let x = data.x_tensor(batch)?;
        let labels = if needs_labels { Some(data.label_tensor(batch)?) } else { None };
        let noise = Noise::sample(model, batch.len(), &mut rng);
        match model.train_step(&x, labels.as_ref(), &noise, opt) {
            Ok(b) => {
                let w = batch.len() as f64 / data.len() as f64;
                loss += w * b.total;
                recon += w * b.recon;
                kl += w * b.kl;
            }
            Err(ModelError::NonFinite(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(EpochStats { epoch: epoch + 1, loss, recon, kl }))
}

/// Trains one seed, resuming from `checkpoint` when it exists. `on_epoch`
/// sees the model after every completed epoch (and once before training
/// with epoch 0 when starting fresh).
pub fn train_run(
    config: &ExperimentConfig,
    data: &Dataset,
    seed: u64,
    checkpoint: Option<&Path>,
    mut on_epoch: impl FnMut(usize, &Model) -> Result<(), ExperimentError>,
) -> Result<TrainedRun, ExperimentError> {
    let start = Instant::now();
    let echo = config.run_echo(seed);
    let mut model = build_model(config, data.dim, seed)?;
    let mut opt = OptimizerState::new(&model.store, optimizer_config(config));
    let mut first_epoch = 0;
    if let Some(path) = checkpoint.filter(|p| p.exists()) {
        let ckpt = read_checkpoint(path)?;
        if ckpt.config_echo != echo {
            return Err(ExperimentError::ResumeMismatch(path.to_path_buf()));
        }
        ckpt.restore(&mut model)?;
        if let Some(o) = ckpt.optimizer {
            opt = o;
        }
        first_epoch = ckpt.epoch as usize;
    } else {
        on_epoch(0, &model)?;
    }

    let mut history = Vec::new();
    let mut non_finite = false;
    for epoch in first_epoch..config.epochs {
        match train_epoch(&mut model, &mut opt, data, config.batch_size, seed, epoch)? {
            Some(stats) => history.push(stats),
            None => {
                non_finite = true;
                break;
            }
        }
        on_epoch(epoch + 1, &model)?;
        let done = epoch + 1;
        if let Some(path) = checkpoint {
            if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) || done == config.epochs {
                write_checkpoint(path, &Checkpoint::capture(&model, Some(&opt), done as u64, &echo))?;
            }
        }
    }

    let (final_loss, neg_loglik, kl_per_circle) = if non_finite {
        (f64::NAN, f64::NAN, vec![f64::NAN; model.circles()])
    } else {
        match dataset_loss(&model, data, seed) {
            Ok(b) => (b.total, b.neg_elbo(), b.kl_per_circle),
            Err(ExperimentError::Model(ModelError::NonFinite(_))) => (f64::NAN, f64::NAN, vec![f64::NAN; model.circles()]),
            Err(e) => return Err(e),
        }
    };
    let collapsed = model.variant.kind.is_variational() && kl_per_circle.iter().any(|&k| !(k >= COLLAPSE_KL));
    let diverged = non_finite || !final_loss.is_finite() || collapsed;
    let report = evaluate_model(&model, config, diverged)?;
    let record = RunRecord {
        seed,
        variant: config.variant.name(),
        beta: config.variant.beta,
        final_loss,
        neg_loglik,
        kl_per_circle,
        report,
        checkpoint: checkpoint.map(Path::to_path_buf),
        wall_time_secs: start.elapsed().as_secs_f64(),
        history,
    };
    Ok(TrainedRun { model, optimizer: opt, record })
}

/// Encodes a fresh uniform walk around the data circle.
pub fn encode_path(model: &Model, spec: &DatasetSpec, samples: usize) -> Result<EncodedPath, ExperimentError> {
    let source = uniform_grid(samples);
    let data = Dataset::at_truth(spec, source.iter().map(|&a| Truth::Circle(a)).collect())?;
    let idx: Vec<usize> = (0..samples).collect();
    let enc = model.encode(&data.x_tensor(&idx)?)?;
    let encoded = enc.iter().map(|e| e.representation.angles()[0]).collect();
    let y_trace = (!model.variant.kind.is_flow()).then(|| enc.iter().map(|e| [e.y[0][0], e.y[0][1]]).collect());
    Ok(EncodedPath::new(source, encoded, y_trace)?)
}

/// Torus paths: each attribute walks a full loop while the other is held
/// at one of `per_factor` evenly spaced values.
pub fn torus_continuities(
    model: &Model,
    spec: &DatasetSpec,
    samples: usize,
    per_factor: usize,
) -> Result<Vec<f64>, ExperimentError> {
    let source = uniform_grid(samples);
    let fixed = uniform_grid(per_factor);
    let mut out = Vec::with_capacity(2 * per_factor);
    for moving_first in [true, false] {
        for &f in &fixed {
            let truth: Vec<Truth> = source
                .iter()
                .map(|&s| Truth::Torus(if moving_first { TorusPoint { a: s, b: f } } else { TorusPoint { a: f, b: s } }))
                .collect();
            let data = Dataset::at_truth(spec, truth)?;
            let idx: Vec<usize> = (0..samples).collect();
            let enc = model.encode(&data.x_tensor(&idx)?)?;
            let points: Vec<TorusPoint> = enc
                .iter()
                .map(|e| {
                    let a: Vec<CircleAngle> = e.representation.angles();
                    TorusPoint { a: a[0], b: a[1] }
                })
                .collect();
            out.push(torus_continuity_score(&source, &points, DEFAULT_PERCENTILE)?);
        }
    }
    Ok(out)
}

pub fn evaluate_model(model: &Model, config: &ExperimentConfig, diverged: bool) -> Result<TopologyReport, ExperimentError> {
    if config.dataset.circles() == 2 {
        let c = torus_continuities(model, &config.dataset, config.eval_path_samples, config.torus_paths_per_factor)?;
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        return Ok(TopologyReport {
            winding: Winding::Undefined,
            crossings: Crossings::NotAvailable,
            continuity: mean,
            homeomorphic: torus_homeomorphism_verdict(&c, diverged),
            cyclic_order: CyclicOrder::NotApplicable,
            diverged,
        });
    }
    let path = encode_path(model, &config.dataset, config.eval_path_samples)?;
    let mut report = TopologyReport::evaluate(&path, diverged)?;
    if !config.metrics.crossings {
        report.crossings = Crossings::NotAvailable;
    }
    if !config.metrics.cyclic_order {
        report.cyclic_order = CyclicOrder::NotApplicable;
    }
    Ok(report)
}
