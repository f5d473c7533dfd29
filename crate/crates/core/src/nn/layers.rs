use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
    Elu,
    Sigmoid,
    Softplus,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Softplus => {
                if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// dy/dx given the input x and the output y = apply(x).
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => Activation::Sigmoid.apply(x),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// x·W + b with W of shape [in, out].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    /// Weights and bias uniform in ±1/√inputs.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), inputs, outputs, bound, rng)?;
        let bias = store.add_uniform(format!("{name}.bias"), 1, outputs, bound, rng)?;
        Ok(Dense { weight, bias, inputs, outputs })
    }

    /// Square layer initialized to the identity map.
    pub fn identity(store: &mut ParamStore, name: &str, size: usize) -> Result<Self, NnError> {
        let mut w = vec![0.0; size * size];
        for i in 0..size {
            w[i * size + i] = 1.0;
        }
        let weight = store.add(format!("{name}.weight"), Tensor::matrix(size, size, w)?)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, size))?;
        Ok(Dense { weight, bias, inputs: size, outputs: size })
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }
}

/// A stack of dense layers, each followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<(Dense, Activation)>,
}

impl Mlp {
    /// `sizes` lists widths from input to output; `hidden` follows every
    /// layer but the last, which uses `output`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(sizes.len().saturating_sub(1));
        for (i, w) in sizes.windows(2).enumerate() {
            let dense = Dense::new(store, &format!("{name}.{i}"), w[0], w[1], rng)?;
            let act = if i + 2 == sizes.len() { output } else { hidden };
            layers.push((dense, act));
        }
        Ok(Mlp { layers })
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.0.inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.0.outputs)
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        for (dense, act) in &self.layers {
            h = dense.forward(tape, store, h)?;
            if *act != Activation::Identity {
                h = tape.activation(h, *act);
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|(d, _)| [d.weight, d.bias]).collect()
    }
}

/// Forward pass outside of training.
pub fn mlp_forward(x: &Tensor, mlp: &Mlp, store: &ParamStore) -> Result<Tensor, NnError> {
    if x.cols() != mlp.inputs() {
        return Err(NnError::ShapeMismatch { op: "mlp_forward", left: x.shape.clone(), right: vec![mlp.inputs()] });
    }
    let tape = Tape::new();
    let xv = tape.input(x.clone());
    let out = mlp.forward(&tape, store, xv)?;
    Ok(tape.value(out))
}
