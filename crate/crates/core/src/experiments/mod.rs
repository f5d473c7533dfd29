//! Run orchestration: configuration, single runs with checkpoint resume,
//! multi-seed sweeps with aggregate reports, and latent traversals.

mod config;
mod run;
mod sweep;
mod traversal;

pub use config::{ExperimentConfig, MetricToggles};
pub use run::{
    build_model, dataset_loss, encode_path, evaluate_model, optimizer_config, torus_continuities, train_epoch,
    train_run, EpochStats, RunRecord, TrainedRun, COLLAPSE_KL,
};
pub use sweep::{checkpoint_path, csv_row, run_dir, run_sweep, Aggregate, SweepReport, REPORT_COLUMNS};
pub use traversal::{export_model_traversal, export_traversal, image_strip, input_dim, load_model, TraversalArtifact};

use std::path::PathBuf;

use thiserror::Error;

use crate::datasets::DatasetError;
use crate::models::{CheckpointError, ModelError};
use crate::nn::NnError;
use crate::topology_metrics::TopologyError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint {0} was written by a different config")]
    ResumeMismatch(PathBuf),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
