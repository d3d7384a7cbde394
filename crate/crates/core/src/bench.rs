//! Real-time-factor measurement harness.
//!
//! RTF is wall-clock synthesis time divided by the duration of audio
//! produced; < 1 means faster than real time. Runs are warmup + `reps` timed
//! forward passes on seeded random mel input (synthesis is compute-bound, so
//! content does not matter; the suite checks that). The reported value is
//! the median. Absolute numbers depend on the machine and are only
//! meaningful as orderings.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::spectral::MelSpectrogram;
use crate::vocoder::{
    build_preset, forward_generator, init_weights, ExecOptions, Preset, MEL_HOP, SAMPLE_RATE,
};

#[derive(Debug, Clone)]
pub struct RtfResult {
    pub preset: String,
    pub platform: String,
    pub threads: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub audio_seconds: f64,
    /// Wall seconds per rep, in run order.
    pub wall_seconds: Vec<f64>,
    /// Per-rep RTF values, in run order.
    pub rtf_values: Vec<f64>,
    /// Median of `rtf_values`.
    pub rtf: f64,
}

impl RtfResult {
    pub fn spread(&self) -> f64 {
        let min = self.rtf_values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.rtf_values.iter().copied().fold(0.0f64, f64::max);
        max / min
    }
}

/// Seeded random log-mel input for benchmarking.
pub fn random_mel(frames: usize, seed: u64) -> MelSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..80 * frames).map(|_| rng.random_range(-9.0..1.0)).collect();
    MelSpectrogram::new(data, 80, frames, SAMPLE_RATE, MEL_HOP).expect("mel dims")
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn platform_descriptor(threads: usize) -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(0);
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown-cpu".into());
    format!("{}-{} {} cores={cores} threads={threads}", std::env::consts::OS, std::env::consts::ARCH, cpu)
}

/// Measures the RTF of a preset on `seconds` of seeded random mel input.
/// `reps >= 3`; one warmup pass runs first.
pub fn measure_rtf(
    preset: Preset,
    seconds: f64,
    threads: usize,
    reps: usize,
    seed: u64,
) -> Result<RtfResult> {
    if seconds <= 0.0 {
        return Err(Error::InvalidArgument("bench seconds must be positive".into()));
    }
    if reps < 3 {
        return Err(Error::InvalidArgument(format!("bench needs >= 3 reps, got {reps}")));
    }
    let frames = ((seconds * f64::from(SAMPLE_RATE)) / MEL_HOP as f64).ceil().max(1.0) as usize;
    let graph = build_preset(preset);
    let weights = init_weights(&graph, seed);
    let basis = if preset.is_basis() {
        Some(BasisMatrix::random(32, 256, 16, seed ^ 0xBA515)?)
    } else {
        None
    };
    let mel = random_mel(frames, seed);
    let opts = ExecOptions { threads: threads.max(1) };

    let warmup = 1;
    let mut audio_seconds = 0.0;
    for _ in 0..warmup {
        let out = forward_generator(&graph, &weights, &mel, basis.as_ref(), opts)?;
        audio_seconds = out.waveform.len() as f64 / f64::from(SAMPLE_RATE);
    }
    let mut wall_seconds = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        let out = forward_generator(&graph, &weights, &mel, basis.as_ref(), opts)?;
        let dt = t0.elapsed().as_secs_f64();
        std::hint::black_box(&out.waveform);
        wall_seconds.push(dt);
    }
    let rtf_values: Vec<f64> = wall_seconds.iter().map(|w| w / audio_seconds).collect();
    Ok(RtfResult {
        preset: preset.name().to_string(),
        platform: platform_descriptor(threads.max(1)),
        threads: threads.max(1),
        repetitions: reps,
        warmup,
        audio_seconds,
        rtf: median(&rtf_values),
        wall_seconds,
        rtf_values,
    })
}
