//! Shortwave signal classification pipeline.
//!
//! Clean baseband waveforms for a registry of HF modes are synthesized in
//! [`modems`], distorted by the ionospheric channel and receiver impairments
//! in [`channel`], packed into fixed-length 4 kHz records by [`dataset`],
//! and classified by the from-scratch 1D CNN in [`nn`]. [`eval`] computes
//! top-k accuracy, SNR curves and confusion matrices.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod modems;
pub mod nn;
pub mod signal;

pub use error::{Error, Result};
pub use signal::{measure_power, normalize_power, IqSignal, SeededRng};

/// Sample rate of every record that enters the dataset.
pub const SYSTEM_RATE_HZ: f64 = 4000.0;
/// Internal synthesis rate of the modulators.
pub const SYNTH_RATE_HZ: f64 = 12000.0;
/// Complex samples per dataset record (about one second at 4 kHz).
pub const RECORD_LEN: usize = 4096;
