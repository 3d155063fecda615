//! Polyphonic sound event detection from binaural audio.
//!
//! The crate covers the whole pipeline: WAV decoding and STFT framing
//! ([`audio`]), log mel-band energies, spectral pitch and per-band GCC-PHAT
//! delays ([`features`]), annotation handling, cross-validation folds and
//! synthetic scenes ([`dataset`]), a multi-label LSTM trained with BPTT and
//! Adam ([`model`]), segment-based error rate and F-score ([`metrics`]), and
//! cross-validated experiments tying them together ([`experiment`]).

pub mod audio;
pub mod dataset;
mod binio;
pub mod error;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
