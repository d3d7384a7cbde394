//! File formats: PCM16 mono WAV and the flat tensor archive.

pub mod archive;
pub mod wav;

pub use archive::{archive_read, archive_write, TensorEntry};
pub use wav::{wav_read, wav_write, WavAudio};
