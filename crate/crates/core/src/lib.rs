//! Waveform synthesis with basis-decomposed vocoders.
//!
//! Audio windows are represented as nonnegative weight vectors over a fixed
//! overcomplete basis matrix; a reduced-upsampling generator predicts the
//! weights from a mel spectrogram and the waveform is recovered by
//! overlap-add synthesis. The crate provides:
//!
//! * [`dsp`] — deterministic 1-D convolution kernels and activations,
//! * [`spectral`] — STFT magnitudes, mel extraction, multi-resolution configs,
//! * [`basis`] — basis synthesis, NNLS decomposition, a basis learner, SI-SNR,
//! * [`vocoder`] — model graphs, forward execution, FLOPs/parameter analysis,
//! * [`objectives`] — spectral/weight/adversarial losses with analytic
//!   gradients and a direct weight-fitting optimizer,
//! * [`io`] — PCM16 WAV and a flat little-endian tensor archive,
//! * [`bench`] — the real-time-factor measurement harness.
//!
//! Feature maps inside model graphs are stored in `f32` with `f64`
//! accumulation; waveforms, weights, and everything on the loss/gradient
//! path are `f64` so that finite-difference checks resolve cleanly.

pub mod basis;
pub mod bench;
pub mod dsp;
pub mod error;
pub mod io;
pub mod objectives;
pub mod spectral;
pub mod vocoder;

pub use error::{Error, Result};
