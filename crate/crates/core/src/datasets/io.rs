//! Flat binary container and CSV export for datasets. Layout, little-endian:
//! magic, version u32, spec echo (TOML, length-prefixed), sample count u64,
//! sample dimension u64, circle count u64, then the f64 sample block and the
//! f64 truth block.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Dataset, DatasetError, DatasetSpec, Truth};
use crate::geometry::{CircleAngle, TorusPoint};

const MAGIC: &[u8; 8] = b"LIEFLOWD";
pub const DATASET_VERSION: u32 = 1;

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let echo = toml::to_string(&self.spec).expect("dataset spec serialises");
        let mut out = Vec::with_capacity(64 + echo.len() + 8 * (self.x().len() + 2 * self.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(echo.len() as u64).to_le_bytes());
        out.extend_from_slice(echo.as_bytes());
        for v in [self.len(), self.dim, self.circles()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self.x() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.truth() {
            for a in t.angles() {
                out.extend_from_slice(&a.radians().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != DATASET_VERSION {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        let echo_len = r.len()?;
        let echo = std::str::from_utf8(r.take(echo_len)?).map_err(|_| corrupt("spec echo is not utf-8"))?;
        let spec: DatasetSpec = toml::from_str(echo).map_err(|e| DatasetError::Corrupt(format!("spec echo: {e}")))?;
        let n = r.len()?;
        let dim = r.len()?;
        let circles = r.len()?;
        if circles != spec.circles() {
            return Err(corrupt("circle count does not match the spec"));
        }
        let x = r.floats(n.checked_mul(dim).ok_or_else(|| corrupt("overflow"))?)?;
        let raw_truth = r.floats(n * circles)?;
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        if x.iter().chain(&raw_truth).any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite value"));
        }
        let truth = raw_truth
            .chunks_exact(circles)
            .map(|c| match c {
                [a] => Truth::Circle(CircleAngle::new(*a)),
                [a, b] => Truth::Torus(TorusPoint::new(*a, *b)),
                _ => unreachable!("circle count checked"),
            })
            .collect();
        Ok(Dataset::from_parts(spec, dim, x, truth))
    }
}

fn corrupt(msg: &str) -> DatasetError {
    DatasetError::Corrupt(msg.to_string())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn len(&mut self) -> Result<usize, DatasetError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).ok().filter(|&n| n <= self.buf.len()).ok_or_else(|| corrupt("length exceeds the data"))
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>, DatasetError> {
        let len = count.checked_mul(8).ok_or_else(|| corrupt("overflow"))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    fs::write(path, dataset.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    Dataset::from_bytes(&fs::read(path)?)
}

/// One row per sample: truth angle columns followed by the sample values.
pub fn export_csv(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut header: Vec<String> = (0..dataset.circles()).map(|c| format!("truth{c}")).collect();
    header.extend((0..dataset.dim).map(|i| format!("x{i}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let s = dataset.sample(i)?;
        let row: Vec<String> = s.truth.angles().iter().map(|a| a.radians().to_string()).chain(s.x.iter().map(f64::to_string)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
