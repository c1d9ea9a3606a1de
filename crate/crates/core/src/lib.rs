//! Cardiovascular signatures from minute-level wearable data.
//!
//! A heart-rate autoencoder conditioned on physical activity and sleep: the
//! encoder compresses a person's heart-rate response into a fixed-size
//! signature, the decoder predicts heart rate from activity plus that
//! signature. The crate also carries the preprocessing transforms, a synthetic
//! cohort simulator, three reference baselines (state means and two
//! gradient-boosted tree variants) and the evaluation statistics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `cardiosig` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod gbt;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
