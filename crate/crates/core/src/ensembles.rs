//! Seed derivation and Gaussian matrix sampling.
//!
//! Every random matrix in the toolkit is drawn from its own stream. A stream
//! is identified by a [`StreamId`] (sample index plus matrix role) and its
//! seed is derived from the master seed with a SplitMix64 mix, so the bits of
//! any matrix depend only on `(master, sample_index, role, shape)` and never on
//! execution order or thread count.
//!
//! Normal variates come from a ChaCha8 generator seeded with the derived seed,
//! transformed by the ziggurat sampler of `rand_distr::StandardNormal`.
//! Matrices are filled in row-major order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The 64-bit seed from which a whole experiment is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl From<u64> for MasterSeed {
    fn from(v: u64) -> Self {
        MasterSeed(v)
    }
}

/// Which Gaussian matrix of a sample a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixRole {
    /// Query weights `W^Q`.
    Q,
    /// Key weights `W^K`.
    K,
    /// Independent noise matrix `W` of the linearized models.
    W,
    /// Scalar Monte Carlo draws that are not tied to a model matrix.
    Aux,
}

impl MatrixRole {
    fn code(self) -> u64 {
        match self {
            MatrixRole::Q => 0,
            MatrixRole::K => 1,
            MatrixRole::W => 2,
            MatrixRole::Aux => 3,
        }
    }
}

/// Identifies one independent random stream within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub sample_index: u64,
    pub role: MatrixRole,
}

impl StreamId {
    pub fn new(sample_index: u64, role: MatrixRole) -> Self {
        Self { sample_index, role }
    }
}

/// SplitMix64 finalizer; a bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of one stream from the master seed.
///
/// For a fixed master the map is injective on every stream with
/// `sample_index < 2^62`: the stream code `4 * sample_index + role` is
/// multiplied by an odd constant and passed through the bijective mixer.
pub fn derive_seed(master: MasterSeed, stream: StreamId) -> MasterSeed {
    let code = (stream.sample_index << 2) | stream.role.code();
    let base = mix64(master.0);
    MasterSeed(mix64(
        base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(code.wrapping_add(1))),
    ))
}

/// A deterministic stream of standard normal variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: MasterSeed) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed.0),
        }
    }

    pub fn from_stream(master: MasterSeed, stream: StreamId) -> Self {
        Self::new(derive_seed(master, stream))
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

/// Samples a `rows x cols` matrix of independent N(0,1) entries.
pub fn sample_gaussian_matrix(rows: usize, cols: usize, seed: MasterSeed) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension(format!(
            "gaussian matrix must be non-empty, got {rows}x{cols}"
        )));
    }
    let mut stream = NormalStream::new(seed);
    let mut data = vec![0.0; rows * cols];
    stream.fill(&mut data);
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Samples the matrix of one stream of an experiment.
pub fn sample_stream_matrix(
    rows: usize,
    cols: usize,
    master: MasterSeed,
    stream: StreamId,
) -> Result<DMatrix<f64>> {
    sample_gaussian_matrix(rows, cols, derive_seed(master, stream))
}
