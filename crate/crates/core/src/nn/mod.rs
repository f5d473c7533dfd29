//! Dense reverse-mode autodiff, the layer set used by the encoders and
//! decoders, and the rectified Adam optimizer.
//!
//! Every tensor on the tape is a row-major `[rows, cols]` matrix of `f64`;
//! a batch is one row per sample.

mod layers;
mod optim;
mod params;
mod tape;

pub use layers::{mlp_forward, Activation, Dense, Mlp};
pub use optim::{OptimizerState, RAdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("parameter `{0}` does not reach the loss")]
    DisconnectedGraph(String),
    #[error("no parameter named `{0}`")]
    UnknownParameter(String),
    #[error("parameter name `{0}` is already taken")]
    DuplicateParameter(String),
    #[error("tensor of shape {shape:?} needs {expected} values, got {got}")]
    BadLength { shape: Vec<usize>, expected: usize, got: usize },
}

/// Dense row-major tensor. Tape values are always two-dimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NnError::BadLength { shape, expected, got: values.len() });
        }
        Ok(Tensor { shape, values, grad: None })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NnError> {
        Tensor::new(vec![rows, cols], values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: vec![rows, cols], values: vec![0.0; rows * cols], grad: None }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Tensor { shape: vec![rows, cols], values: vec![v; rows * cols], grad: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1, 1], values: vec![v], grad: None }
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NnError::ShapeMismatch { op: "from_rows", left: vec![cols], right: vec![r.len()] });
            }
            values.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }
}

#[cfg(test)]
mod tests;
