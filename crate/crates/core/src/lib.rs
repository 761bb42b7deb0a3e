//! Frequency-complemented motion codec and music-conditioned generation.
//!
//! The pipeline has three parts:
//!
//! * a vector-quantized convolutional autoencoder over half-body motion
//!   sequences whose decoder is complemented by small frequency-restoring
//!   conv blocks, trained with a spectral (focal frequency) loss on top of
//!   the usual VQ objective ([`model`]),
//! * a causal transformer that predicts upper/lower pose-code streams from
//!   music feature tracks ([`gpt`]),
//! * evaluation metrics for motion quality, diversity, rhythm alignment,
//!   and speed variation ([`metrics`]).
//!
//! Everything runs on a small reverse-mode autodiff engine ([`tensor`])
//! with 64-bit floats and deterministic seeding, so training runs are
//! reproducible and every gradient is checkable against finite differences.

pub mod config;
pub mod error;
pub mod gpt;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod spectral;
pub mod verify;
pub mod tensor;

pub use error::{Error, Result};
