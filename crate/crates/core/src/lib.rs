//! Singular value spectra of random single-layer attention matrices and
//! their linearized free-probability surrogates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod freeprob;
pub mod io;
pub mod models;
pub mod numerics;
pub mod spectra;
pub mod verify;

pub use ensembles::{derive_seed, MasterSeed, MatrixRole, NormalStream, StreamId};
pub use error::{Error, Result};
pub use models::{LinearCoefficients, MatrixSample, ModelConfig, ModelKind};
pub use spectra::{EmpiricalDistribution, SpectrumSample};
