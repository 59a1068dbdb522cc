//! Masked multi-query transformer for emotion recognition from incomplete
//! multi-modal physiological recordings.
//!
//! The crate is organised bottom-up:
//!
//! * [`sigkit`]: filtering, resampling, Welch PSD and differential entropy.
//! * [`synthgen`]: seeded synthetic recordings, missingness and artifacts.
//! * [`tensor_ad`]: a small tape-based reverse-mode autodiff engine.
//! * [`mmqnet`]: query banks, attention masks and the encoder.
//! * [`objective`]: reconstruction, classification and conditional MI terms.
//! * [`trainer`]: Adam, the alternating training loop and checkpoints.
//! * [`evalharness`]: missing-rate sweeps, ablations and result tables.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise.

pub mod evalharness;
pub mod mmqnet;
pub mod objective;
pub mod par;
pub mod seed;
pub mod sigkit;
pub mod synthgen;
pub mod tensor_ad;
pub mod trainer;

mod error;

pub use error::{Error, Result};
