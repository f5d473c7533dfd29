//! Equivariant first decoder layer: the latent rotation acts on learned
//! Fourier coefficients instead of being fed to the decoder as (cos, sin).

use crate::geometry::{rotate_vector, CircleAngle};
use crate::nn::{NnError, ParamId, ParamStore, Tape, Tensor, Var};

/// `harmonics[n - 1][j]` is the coefficient pair c_{n,j} of channel j at
/// harmonic n.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    pub harmonics: Vec<Vec<[f64; 2]>>,
    pub constant: Vec<f64>,
}

impl FourierCoefficients {
    pub fn feature_len(&self) -> usize {
        2 * self.harmonics.iter().map(Vec::len).sum::<usize>() + self.constant.len()
    }
}

/// Concatenation over (n, j) of R(n·z)·c_{n,j}, followed by the constant
/// channel.
pub fn action_decoder_first_layer(z: CircleAngle, coeffs: &FourierCoefficients) -> Vec<f64> {
    let mut out = Vec::with_capacity(coeffs.feature_len());
    for (i, channels) in coeffs.harmonics.iter().enumerate() {
        let rot = CircleAngle::new((i + 1) as f64 * z.radians());
        for c in channels {
            out.extend(rotate_vector(rot, *c));
        }
    }
    out.extend_from_slice(&coeffs.constant);
    out
}

/// Learned coefficients of one circle factor, stored as two rows (first and
/// second coordinate of every c_{n,j}) plus the constant channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionLayer {
    pub harmonics: usize,
    pub channels: usize,
    pub first: ParamId,
    pub second: ParamId,
    pub constant: ParamId,
}

impl ActionLayer {
    pub fn new<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        harmonics: usize,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let n = harmonics * channels;
        let first = store.add_uniform(format!("{name}.coef_first"), 1, n, 1.0, rng)?;
        let second = store.add_uniform(format!("{name}.coef_second"), 1, n, 1.0, rng)?;
        let constant = store.add_uniform(format!("{name}.constant"), 1, channels, 1.0, rng)?;
        Ok(ActionLayer { harmonics, channels, first, second, constant })
    }

    pub fn feature_len(&self) -> usize {
        2 * self.harmonics * self.channels + self.channels
    }

    pub fn coefficients(&self, store: &ParamStore) -> FourierCoefficients {
        let (a, b) = (store.values(self.first), store.values(self.second));
        let harmonics = (0..self.harmonics)
            .map(|n| (0..self.channels).map(|j| [a[n * self.channels + j], b[n * self.channels + j]]).collect())
            .collect();
        FourierCoefficients { harmonics, constant: store.values(self.constant).to_vec() }
    }

    /// Tape version of [`action_decoder_first_layer`] for a column of angles.
    pub fn forward(&self, tape: &Tape, store: &ParamStore, z: Var) -> Result<Var, NnError> {
        let (rows, _) = tape.shape(z);
        let n = self.harmonics * self.channels;
        let multipliers: Vec<f64> = (0..n).map(|k| (k / self.channels + 1) as f64).collect();
        let mult = tape.input(Tensor::matrix(1, n, multipliers)?);
        let angles = tape.matmul(z, mult)?;
        let (c, s) = (tape.cos(angles), tape.sin(angles));
        let a = tape.param(store, self.first);
        let b = tape.param(store, self.second);
        let f1 = tape.sub(tape.mul_row(c, a)?, tape.mul_row(s, b)?)?;
        let f2 = tape.add(tape.mul_row(s, a)?, tape.mul_row(c, b)?)?;
        // Interleave the two blocks into (x, y) pairs.
        let mut perm = vec![0.0; 4 * n * n];
        for k in 0..n {
            perm[k * 2 * n + 2 * k] = 1.0;
            perm[(n + k) * 2 * n + 2 * k + 1] = 1.0;
        }
        let perm = tape.input(Tensor::matrix(2 * n, 2 * n, perm)?);
        let pairs = tape.matmul(tape.concat_cols(&[f1, f2])?, perm)?;
        let constant = tape.add_row(tape.input(Tensor::zeros(rows, self.channels)), tape.param(store, self.constant))?;
        tape.concat_cols(&[pairs, constant])
    }
}
