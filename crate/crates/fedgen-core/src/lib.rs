//! Core library for a single-process federated generative-modeling simulator
//! over multi-hot binary time series.
//!
//! The pipeline has two stages. Stage 1 trains one binary autoencoder per
//! simulated hospital and aggregates the encoders server-side with layer-wise
//! neuron matching, so that all hospitals share one semantically aligned
//! latent space. Stage 2 trains a temporal conditional VAE on the aligned
//! latent sequences and aggregates it with distribution-aware weights that
//! down-weight hospitals whose latent distributions drift from the rest.
//! Trained models generate synthetic cohorts that are scored with fidelity,
//! downstream-utility, and privacy metrics.
//!
//! Everything in this crate is deterministic given explicit seeds: same
//! configuration, same results, bit for bit. The crate is `no_std`-compatible
//! (with `alloc`); the `std` feature only adds a threaded client executor and
//! wall-clock timing for round records. File formats, checkpoints, and the
//! command-line front end live in the companion `fedgen` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bae;
pub mod data;
pub mod distagg;
pub mod error;
pub mod eval;
pub mod exec;
pub mod federation;
pub(crate) mod fmath;
pub mod matching;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tcvae;
pub mod tensor;

pub use error::{CoreError, FormatError};
pub use rng::Rng;
pub use tensor::Matrix;
