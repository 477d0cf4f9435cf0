//! Room-acoustic parameter analysis and blind estimation, without the standard library.
//!
//! The crate covers the numerical side of the pipeline:
//!
//! * [`signal`]: the mono [`Signal`] buffer, resampling, peak normalization, convolution.
//! * [`rir`]: ground-truth RT60, DRR, C50, C80 and STI from room impulse responses.
//! * [`noise`]: white/pink generators and exact-SNR noise scaling.
//! * [`dataset`]: split assignment, recipes and example synthesis `y = x * h + n`.
//! * [`features`]: MFCC extraction and feature standardization.
//! * [`nn`]: a small Conv2D/GRU/Dense stack with Adam and early stopping.
//! * [`wada`]: the WADA-SNR blind SNR baseline.
//! * [`eval`]: MAE, SNR-binned tables and calibration curves.
//!
//! File formats, WAV I/O and the command line live in the `roomest` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod eval;
pub mod features;
pub mod fft;
pub mod fingerprint;
pub mod label;
pub mod nn;
pub mod noise;
pub mod rir;
pub mod signal;
pub mod synth;
pub mod wada;

pub use label::{AcousticLabel, LabelFlags, LabelStats, Param};
pub use signal::Signal;

/// Rate every dataset example and feature matrix is produced at.
pub const PIPELINE_RATE: u32 = 16_000;
