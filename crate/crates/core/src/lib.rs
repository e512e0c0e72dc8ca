//! Desk-scale lab for simulating a 24-cell photonic PUF and measuring how
//! well multilayer-perceptron attacks predict its responses when
//! challenges and responses are re-encoded in arbitrary radices.
//!
//! * [`codec`]: fixed-width radix encoding of 24-bit values.
//! * [`optics`]: Jones-calculus component models.
//! * [`puf`]: seeded PUF realizations and CRP datasets.
//! * [`stats`]: statistical validation of simulated PUFs.
//! * [`mlp`]: the attack network, its trainer and checkpoints.
//! * [`attack`]: experiment grid, evaluation pipeline and summaries.

pub mod codec;
pub mod error;
pub mod io_util;
pub mod optics;
pub mod puf;
pub mod rng;
pub mod stats;
pub mod mlp;
pub mod attack;

pub use error::{Error, Result};
