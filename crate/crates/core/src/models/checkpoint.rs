//! Versioned binary checkpoint: config echo, epoch, named f64 parameter
//! arrays and optimizer moments. All integers and floats are little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::Model;
use crate::nn::{OptimizerState, RAdamConfig, Tensor};

const MAGIC: &[u8; 8] = b"LIEFLOWC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint is corrupt: {0}")]
    CheckpointCorrupt(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub epoch: u64,
    pub params: Vec<StoredParam>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn capture(model: &Model, optimizer: Option<&OptimizerState>, epoch: u64, config_echo: &str) -> Self {
        let params = model
            .store
            .iter()
            .map(|p| StoredParam {
                name: p.name.clone(),
                shape: p.tensor.shape.clone(),
                values: p.tensor.values.clone(),
                trainable: p.trainable,
            })
            .collect();
        Checkpoint { config_echo: config_echo.to_string(), epoch, params, optimizer: optimizer.cloned() }
    }

    /// Copies the stored parameters into a model of the same architecture.
    pub fn restore(&self, model: &mut Model) -> Result<(), CheckpointError> {
        if self.params.len() != model.store.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} stored parameters, model has {}",
                self.params.len(),
                model.store.len()
            )));
        }
        let ids: Vec<_> = model.store.ids().collect();
        for (id, sp) in ids.into_iter().zip(&self.params) {
            let p = model.store.param_mut(id);
            if p.name != sp.name || p.tensor.shape != sp.shape {
                return Err(CheckpointError::Mismatch(format!("parameter `{}` vs stored `{}`", p.name, sp.name)));
            }
            p.tensor = Tensor { shape: sp.shape.clone(), values: sp.values.clone(), grad: Some(vec![0.0; sp.values.len()]) };
            p.trainable = sp.trainable;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.string(&self.config_echo);
        w.u64(self.epoch);
        w.u64(self.params.len() as u64);
        for p in &self.params {
            w.string(&p.name);
            w.0.push(p.trainable as u8);
            w.u64(p.shape.len() as u64);
            for &d in &p.shape {
                w.u64(d as u64);
            }
            w.f64s(&p.values);
        }
        match &self.optimizer {
            None => w.0.push(0),
            Some(o) => {
                w.0.push(1);
                let c = o.config;
                for v in [c.learning_rate, c.beta1, c.beta2, c.eps] {
                    w.f64(v);
                }
                w.0.push(c.rectify as u8);
                w.u64(o.step);
                w.u64(o.first_moment.len() as u64);
                for (m, v) in o.first_moment.iter().zip(&o.second_moment) {
                    w.f64s(m);
                    w.f64s(v);
                }
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::CheckpointCorrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let config_echo = r.string()?;
        let epoch = r.u64()?;
        let n = r.len()?;
        let mut params = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name = r.string()?;
            let trainable = r.byte()? != 0;
            let ndim = r.len()?;
            let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
            let values = r.f64s()?;
            if shape.iter().product::<usize>() != values.len() {
                return Err(CheckpointError::CheckpointCorrupt(format!("shape of `{name}` does not match its data")));
            }
            params.push(StoredParam { name, shape, values, trainable });
        }
        let optimizer = match r.byte()? {
            0 => None,
            1 => {
                let (learning_rate, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let rectify = r.byte()? != 0;
                let step = r.u64()?;
                let k = r.len()?;
                let mut first_moment = Vec::with_capacity(k.min(4096));
                let mut second_moment = Vec::with_capacity(k.min(4096));
                for _ in 0..k {
                    first_moment.push(r.f64s()?);
                    second_moment.push(r.f64s()?);
                }
                Some(OptimizerState {
                    config: RAdamConfig { learning_rate, beta1, beta2, eps, rectify },
                    step,
                    first_moment,
                    second_moment,
                })
            }
            b => return Err(CheckpointError::CheckpointCorrupt(format!("bad optimizer tag {b}"))),
        };
        if r.pos != bytes.len() {
            return Err(CheckpointError::CheckpointCorrupt("trailing bytes".into()));
        }
        Ok(Checkpoint { config_echo, epoch, params, optimizer })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    // Write then rename so a crash never leaves a half-written file behind.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ckpt.to_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::CheckpointCorrupt("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn byte(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| CheckpointError::CheckpointCorrupt(format!("length {v} exceeds the data")))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::CheckpointCorrupt("invalid utf-8".into()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len()?;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::CheckpointCorrupt("overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
