//! STFT magnitudes, mel extraction, and the shared multi-resolution settings.
//!
//! Framing convention, fixed so frame counts are testable: the signal is
//! zero-padded on the right to at least `win_size`, reflection-padded by
//! `win_size / 2` on both ends, and frame `f` starts at `f * hop_size` in the
//! padded signal. A signal of `n` samples therefore yields exactly
//! `ceil(n / hop_size)` frames. Frames are Hann-windowed (periodic window),
//! zero-padded to `fft_size`, and transformed; only magnitudes are kept.
//!
//! Everything here computes in `f64`; these paths sit under the loss
//! gradients and finite-difference checks need the headroom.

use crate::error::{Error, Result};
use rustfft::{num_complex::Complex64, FftPlanner};

/// Magnitude floor applied before logarithms.
pub const LOG_FLOOR: f64 = 1e-5;

/// One STFT resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub win_size: usize,
}

impl StftConfig {
    pub fn new(fft_size: usize, hop_size: usize, win_size: usize) -> Result<Self> {
        if fft_size == 0 || hop_size == 0 || win_size == 0 {
            return Err(Error::InvalidArgument("stft sizes must be positive".into()));
        }
        if win_size > fft_size {
            return Err(Error::InvalidArgument(format!(
                "win_size {win_size} exceeds fft_size {fft_size}"
            )));
        }
        if hop_size > win_size {
            return Err(Error::InvalidArgument(format!(
                "hop_size {hop_size} exceeds win_size {win_size}"
            )));
        }
        Ok(Self { fft_size, hop_size, win_size })
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for a signal of `samples` samples.
    pub fn frames(&self, samples: usize) -> usize {
        samples.max(self.win_size).div_ceil(self.hop_size)
    }
}

/// The three resolutions shared by the multi-resolution STFT loss and the
/// spectrogram discriminator (the Parallel WaveGAN triple).
pub fn multi_resolution_configs() -> [StftConfig; 3] {
    [
        StftConfig { fft_size: 1024, hop_size: 120, win_size: 600 },
        StftConfig { fft_size: 2048, hop_size: 240, win_size: 1200 },
        StftConfig { fft_size: 512, hop_size: 50, win_size: 240 },
    ]
}

/// Nonnegative magnitude matrix, conceptually `[fft_size/2 + 1, frames]`,
/// stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    data: Vec<f64>,
    bins: usize,
    frames: usize,
}

impl MagnitudeSpectrogram {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    /// All magnitudes of one frame.
    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Periodic Hann window.
pub fn hann_window(size: usize) -> Vec<f64> {
    let n = size as f64;
    (0..size)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n).cos()))
        .collect()
}

/// Reflection padding without edge repetition: `[a b c d]` padded by 2 becomes
/// `[c b a b c d c b]`.
fn reflect_pad(signal: &[f64], pad: usize) -> Vec<f64> {
    let n = signal.len();
    debug_assert!(n > pad, "signal too short for reflection");
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(signal[i]);
    }
    out.extend_from_slice(signal);
    for i in 2..=pad + 1 {
        out.push(signal[n - i]);
    }
    out
}

/// Full complex STFT retained for gradient propagation.
pub(crate) struct StftAnalysis {
    /// `frames * bins` complex values, frame-major.
    pub spectra: Vec<Complex64>,
    pub bins: usize,
    pub frames: usize,
    /// Length the signal was zero-extended to before reflection padding.
    pub base_len: usize,
    /// Original signal length (gradients past this index are dropped).
    pub signal_len: usize,
    pub cfg: StftConfig,
}

pub(crate) fn stft_analysis(signal: &[f64], cfg: &StftConfig) -> Result<StftAnalysis> {
    if signal.is_empty() {
        return Err(Error::InvalidArgument("stft of empty signal".into()));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("stft input contains non-finite values".into()));
    }
    let mut base = signal.to_vec();
    if base.len() < cfg.win_size {
        base.resize(cfg.win_size, 0.0);
    }
    let base_len = base.len();
    let frames = base_len.div_ceil(cfg.hop_size);
    let pad = cfg.win_size / 2;
    let padded = reflect_pad(&base, pad);
    let window = hann_window(cfg.win_size);
    let bins = cfg.bins();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let mut spectra = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = f * cfg.hop_size;
        for v in buf.iter_mut() {
            *v = Complex64::default();
        }
        for (i, w) in window.iter().enumerate() {
            buf[i] = Complex64::new(padded[start + i] * w, 0.0);
        }
        fft.process(&mut buf);
        spectra.extend_from_slice(&buf[..bins]);
    }
    Ok(StftAnalysis { spectra, bins, frames, base_len, signal_len: signal.len(), cfg: *cfg })
}

impl StftAnalysis {
    pub fn magnitudes(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            data: self.spectra.iter().map(|c| c.norm()).collect(),
            bins: self.bins,
            frames: self.frames,
        }
    }

    /// Chains `d_loss / d_magnitude` (frame-major, same layout as
    /// [`MagnitudeSpectrogram::data`]) back to the time-domain signal through
    /// the window, the framing, and the reflection padding.
    pub fn grad_to_signal(&self, d_mag: &[f64]) -> Vec<f64> {
        assert_eq!(d_mag.len(), self.frames * self.bins);
        let cfg = &self.cfg;
        let pad = cfg.win_size / 2;
        let window = hann_window(cfg.win_size);
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(cfg.fft_size);
        let mut grad_padded = vec![0.0f64; self.base_len + 2 * pad];
        let mut buf = vec![Complex64::default(); cfg.fft_size];
        for f in 0..self.frames {
            for v in buf.iter_mut() {
                *v = Complex64::default();
            }
            let mut any = false;
            for k in 0..self.bins {
                let g = d_mag[f * self.bins + k];
                if g == 0.0 {
                    continue;
                }
                let x = self.spectra[f * self.bins + k];
                let m = x.norm();
                if m < 1e-300 {
                    continue; // magnitude kink; subgradient 0
                }
                buf[k] = x * (g / m);
                any = true;
            }
            if !any {
                continue;
            }
            // d|X_k|/dx_t = Re(X_k e^{2*pi*i*k*t/N}) / |X_k| summed over the
            // one-sided bins; rustfft's unnormalized inverse computes exactly
            // sum_k buf[k] e^{2*pi*i*k*t/N}.
            ifft.process(&mut buf);
            let start = f * cfg.hop_size;
            for (i, w) in window.iter().enumerate() {
                grad_padded[start + i] += buf[i].re * w;
            }
        }
        // undo reflection padding: each padded index maps to a source index
        let mut grad = vec![0.0f64; self.base_len];
        for (p, g) in grad_padded.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let src = if p < pad {
                pad - p
            } else if p - pad < self.base_len {
                p - pad
            } else {
                let over = p - pad - self.base_len;
                self.base_len - 2 - over
            };
            grad[src] += g;
        }
        grad.truncate(self.signal_len);
        grad
    }
}

/// Hann-windowed STFT magnitudes.
pub fn stft_magnitude(signal: &[f64], cfg: &StftConfig) -> Result<MagnitudeSpectrogram> {
    Ok(stft_analysis(signal, cfg)?.magnitudes())
}

/// Magnitudes of a single full-length transform with a rectangular window,
/// all `fft_size` bins. Zero-pads `signal` up to `fft_size`.
pub fn fft_magnitudes(signal: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    if signal.len() > fft_size {
        return Err(Error::InvalidArgument(format!(
            "signal length {} exceeds fft_size {fft_size}",
            signal.len()
        )));
    }
    let mut buf = vec![Complex64::default(); fft_size];
    for (b, &v) in buf.iter_mut().zip(signal) {
        *b = Complex64::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(fft_size).process(&mut buf);
    Ok(buf.iter().map(|c| c.norm()).collect())
}

/// Mel extraction settings. The default preset is the common 22.05 kHz
/// recipe: fft 1024, hop 256, win 1024, 80 bands over 0..8 kHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop_size: usize,
    pub win_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelConfig {
    pub fn hifigan_22k() -> Self {
        Self {
            sample_rate: 22050,
            fft_size: 1024,
            hop_size: 256,
            win_size: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            fft_size: self.fft_size,
            hop_size: self.hop_size,
            win_size: self.win_size,
        }
    }
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::hifigan_22k()
    }
}

/// Log-mel energies `[n_mels, frames]`, stored band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    n_mels: usize,
    frames: usize,
    pub sample_rate: u32,
    pub hop_size: usize,
}

impl MelSpectrogram {
    pub fn new(data: Vec<f64>, n_mels: usize, frames: usize, sample_rate: u32, hop_size: usize) -> Result<Self> {
        if data.len() != n_mels * frames {
            return Err(Error::shape("MelSpectrogram::new", n_mels * frames, data.len()));
        }
        Ok(Self { data, n_mels, frames, sample_rate, hop_size })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn at(&self, band: usize, frame: usize) -> f64 {
        self.data[band * self.frames + frame]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Slaney-scale mel value of a frequency in Hz (linear below 1 kHz,
/// logarithmic above; no HTK formula).
fn hz_to_mel(hz: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if hz >= min_log_hz {
        min_log_mel + (hz / min_log_hz).ln() / logstep
    } else {
        hz / f_sp
    }
}

fn mel_to_hz(mel: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if mel >= min_log_mel {
        min_log_hz * ((mel - min_log_mel) * logstep).exp()
    } else {
        mel * f_sp
    }
}

/// Triangular mel filterbank `[n_mels][fft_size/2 + 1]`, area-normalized so
/// each row integrates to ~2 / bandwidth.
pub fn mel_filterbank(
    sample_rate: u32,
    fft_size: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Vec<Vec<f64>>> {
    if n_mels == 0 {
        return Err(Error::InvalidArgument("n_mels must be positive".into()));
    }
    if !(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate as f64 / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid mel band edges fmin={fmin} fmax={fmax} at sr={sample_rate}"
        )));
    }
    let bins = fft_size / 2 + 1;
    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins)
        .map(|k| k as f64 * sample_rate as f64 / fft_size as f64)
        .collect();
    let mut bank = vec![vec![0.0f64; bins]; n_mels];
    for m in 0..n_mels {
        let (lo, mid, hi) = (pts[m], pts[m + 1], pts[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in bin_hz.iter().enumerate() {
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            let w = up.min(down).max(0.0);
            bank[m][k] = w * norm;
        }
    }
    Ok(bank)
}

/// STFT magnitudes through the mel filterbank, floored at [`LOG_FLOOR`] and
/// log-compressed (natural log).
pub fn mel_spectrogram(signal: &[f64], sample_rate: u32, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if sample_rate != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "sample rate mismatch: signal is {sample_rate} Hz, config expects {} Hz",
            cfg.sample_rate
        )));
    }
    let mag = stft_magnitude(signal, &cfg.stft())?;
    let bank = mel_filterbank(cfg.sample_rate, cfg.fft_size, cfg.n_mels, cfg.fmin, cfg.fmax)?;
    let frames = mag.frames();
    let mut data = vec![0.0f64; cfg.n_mels * frames];
    for f in 0..frames {
        let spec = mag.frame(f);
        for (m, row) in bank.iter().enumerate() {
            let e: f64 = row.iter().zip(spec).map(|(w, s)| w * s).sum();
            data[m * frames + f] = e.max(LOG_FLOOR).ln();
        }
    }
    MelSpectrogram::new(data, cfg.n_mels, frames, cfg.sample_rate, cfg.hop_size)
}
