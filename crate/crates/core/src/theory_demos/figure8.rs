//! Figure-8 escape experiment: the encoder is first fitted to a
//! self-intersecting figure-8 in the intermediate space, then trained on
//! its usual objective while the cyclic order of four tracked points is
//! followed epoch by epoch.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DemoError;
use crate::datasets::Dataset;
use crate::experiments::{build_model, encode_path, optimizer_config, train_epoch, ExperimentConfig, ExperimentError};
use crate::geometry::CircleAngle;
use crate::models::{Model, Noise};
use crate::nn::{OptimizerState, RAdamConfig, Tensor};
use crate::topology_metrics::{arc_endpoints, canonical_class, cyclic_order, CyclicOrder, EncodedPath, TopologyReport};

/// The figure-8 (½ sin 2θ, sin θ), which crosses itself at the origin.
pub fn figure8_target(theta: CircleAngle) -> [f64; 2] {
    let t = theta.radians();
    [0.5 * (2.0 * t).sin(), t.sin()]
}

/// Canonical cyclic class of the arc ends of a figure-8.
pub const FIGURE8_CLASS: [usize; 4] = [1, 2, 4, 3];
/// Canonical cyclic class of the arc ends of a homeomorphic loop.
pub const HOMEOMORPHIC_CLASS: [usize; 4] = [1, 2, 3, 4];

/// Escape counts over a set of seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EscapeSummary {
    pub runs: usize,
    /// Runs whose fit reached the figure-8 class at epoch 0.
    pub started: usize,
    pub escaped: usize,
}

impl EscapeSummary {
    pub fn from_traces(traces: &[Figure8Trace]) -> Self {
        EscapeSummary {
            runs: traces.len(),
            started: traces.iter().filter(|t| t.started_in_figure8()).count(),
            escaped: traces.iter().filter(|t| t.escaped_at.is_some()).count(),
        }
    }
}

impl std::fmt::Display for EscapeSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "escaped {}/{} (figure-8 at epoch 0 in {}/{})", self.escaped, self.started, self.started, self.runs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure8Config {
    pub experiment: ExperimentConfig,
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub pretrain_learning_rate: f64,
    /// Keeps every parameter fixed after the figure-8 fit.
    pub freeze: bool,
}

impl Default for Figure8Config {
    fn default() -> Self {
        Figure8Config {
            experiment: ExperimentConfig::default(),
            pretrain_steps: 2000,
            pretrain_batch: 64,
            pretrain_learning_rate: 2e-3,
            freeze: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure8Epoch {
    pub epoch: usize,
    pub loss: f64,
    pub report: TopologyReport,
    /// Canonical cyclic class of the four tracked points.
    pub tracked_order: CyclicOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure8Trace {
    pub seed: u64,
    pub variant: String,
    /// Source angles of the tracked points (the arc ends after the fit).
    pub tracked: Option<[CircleAngle; 4]>,
    pub epochs: Vec<Figure8Epoch>,
    /// First epoch whose tracked order is in the homeomorphic class, for
    /// runs that start in the figure-8 class.
    pub escaped_at: Option<usize>,
}

impl Figure8Trace {
    /// Whether the fit reached the figure-8 class at epoch 0.
    pub fn started_in_figure8(&self) -> bool {
        self.epochs.first().is_some_and(|e| e.tracked_order == CyclicOrder::Order(FIGURE8_CLASS.to_vec()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,variant,epoch,loss,winding,crossings,continuity,homeomorphic,tracked_order\n");
        for e in &self.epochs {
            let r = &e.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},\"{}\"",
                self.seed, self.variant, e.epoch, e.loss, r.winding, r.crossings, r.continuity, r.homeomorphic, e.tracked_order
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DemoError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn tracked_class(path: &EncodedPath, idx: Option<[usize; 4]>) -> CyclicOrder {
    let Some(idx) = idx else { return CyclicOrder::NotApplicable };
    let pts: Vec<CircleAngle> = idx.iter().map(|&i| path.encoded()[i]).collect();
    match cyclic_order(&pts, &[1, 2, 3, 4]) {
        Ok(o) => CyclicOrder::Order(canonical_class(&o)),
        Err(_) => CyclicOrder::NotApplicable,
    }
}

/// Fits the encoder so that its intermediate output (or, for flow heads,
/// its density peak) follows the figure-8, using random mini-batches.
pub fn fit_figure8(model: &mut Model, data: &Dataset, cfg: &Figure8Config, seed: u64) -> Result<f64, DemoError> {
    let mut opt = OptimizerState::new(
        &model.store,
        RAdamConfig { learning_rate: cfg.pretrain_learning_rate, ..RAdamConfig::default() },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF18E);
    let batch = cfg.pretrain_batch.clamp(1, data.len());
    let mut last = f64::NAN;
    for _ in 0..cfg.pretrain_steps {
        let idx = sample(&mut rng, data.len(), batch).into_vec();
        let x = data.x_tensor(&idx).map_err(ExperimentError::from)?;
        let targets: Vec<f64> = idx.iter().flat_map(|&i| figure8_target(data.truth()[i].angles()[0])).collect();
        let t = Tensor::matrix(idx.len(), 2, targets).map_err(ExperimentError::from)?;
        let noise = Noise::sample(model, idx.len(), &mut rng);
        last = model.encoder_target_step(&x, &t, &noise, &mut opt).map_err(ExperimentError::from)?;
    }
    Ok(last)
}

/// Runs the escape experiment for one seed on a circle dataset.
pub fn figure8_escape_experiment(cfg: &Figure8Config, seed: u64) -> Result<Figure8Trace, DemoError> {
    let exp = &cfg.experiment;
    exp.validate()?;
    if exp.dataset.circles() != 1 {
        return Err(DemoError::InvalidInput("the figure-8 experiment needs a circle dataset".into()));
    }
    let data = Dataset::generate(&exp.dataset).map_err(ExperimentError::from)?;
    let mut model = build_model(exp, data.dim, seed)?;
    fit_figure8(&mut model, &data, cfg, seed)?;
    if cfg.freeze {
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            model.store.set_trainable(id, false);
        }
    }

    let path = encode_path(&model, &exp.dataset, exp.eval_path_samples)?;
    let idx = arc_endpoints(&path);
    let tracked = idx.map(|i| i.map(|k| path.source()[k]));
    let mut epochs = vec![Figure8Epoch {
        epoch: 0,
        loss: f64::NAN,
        report: TopologyReport::evaluate(&path, false)?,
        tracked_order: tracked_class(&path, idx),
    }];
    let mut opt = OptimizerState::new(&model.store, optimizer_config(exp));
    for epoch in 0..exp.epochs {
        let stats = train_epoch(&mut model, &mut opt, &data, exp.batch_size, seed, epoch)?;
        let Some(stats) = stats else { break };
        let path = encode_path(&model, &exp.dataset, exp.eval_path_samples)?;
        epochs.push(Figure8Epoch {
            epoch: epoch + 1,
            loss: stats.loss,
            report: TopologyReport::evaluate(&path, false)?,
            tracked_order: tracked_class(&path, idx),
        });
    }
    let mut trace = Figure8Trace { seed, variant: exp.variant.name(), tracked, epochs, escaped_at: None };
    if trace.started_in_figure8() {
        trace.escaped_at = trace
            .epochs
            .iter()
            .find(|e| e.tracked_order == CyclicOrder::Order(HOMEOMORPHIC_CLASS.to_vec()))
            .map(|e| e.epoch);
    }
    Ok(trace)
}
