//! RIFF/WAVE PCM16 mono reader and writer.
//!
//! Samples are scaled by 1/32768 on read; writing quantizes with
//! round-half-away-from-zero and clamps to the i16 range, so a write/read
//! round trip moves each sample by at most one quantization step.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    /// Samples in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

const SCALE: f64 = 32768.0;

fn read_u16(buf: &[u8], pos: usize) -> u16 {
    u16::from_le_bytes([buf[pos], buf[pos + 1]])
}

fn read_u32(buf: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes([buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]])
}

pub fn wav_read(path: &Path) -> Result<WavAudio> {
    let buf = std::fs::read(path)?;
    if buf.len() < 12 || &buf[0..4] != b"RIFF" || &buf[8..12] != b"WAVE" {
        return Err(Error::Wav(format!("{}: not a RIFF/WAVE file", path.display())));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= buf.len() {
        let id = &buf[pos..pos + 4];
        let size = read_u32(&buf, pos + 4) as usize;
        let body_start = pos + 8;
        if body_start + size > buf.len() {
            return Err(Error::Wav(format!(
                "chunk {:?} claims {size} bytes but only {} remain",
                String::from_utf8_lossy(id),
                buf.len() - body_start
            )));
        }
        let body = &buf[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Wav("fmt chunk too small".into()));
                }
                fmt = Some((read_u16(body, 0), read_u16(body, 2), read_u32(body, 4), read_u16(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {} // skip ancillary chunks
        }
        pos = body_start + size + (size & 1); // chunks are word-aligned
    }
    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    if format != 1 {
        return Err(Error::Wav(format!("unsupported encoding {format} (PCM required)")));
    }
    if channels != 1 {
        return Err(Error::Wav(format!("unsupported channel count {channels} (mono required)")));
    }
    if bits != 16 {
        return Err(Error::Wav(format!("unsupported bit depth {bits} (16-bit required)")));
    }
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(Error::Wav("data chunk has odd byte count".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| f64::from(i16::from_le_bytes([b[0], b[1]])) / SCALE)
        .collect();
    Ok(WavAudio { samples, sample_rate })
}

fn quantize(v: f64) -> i16 {
    // f64::round rounds half away from zero
    (v * SCALE).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

pub fn wav_write(path: &Path, audio: &WavAudio) -> Result<()> {
    if audio.sample_rate == 0 {
        return Err(Error::Wav("sample rate must be positive".into()));
    }
    let data_len = audio.samples.len() * 2;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len as u32).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&audio.sample_rate.to_le_bytes())?;
    w.write_all(&(audio.sample_rate * 2).to_le_bytes())?; // byte rate
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&(data_len as u32).to_le_bytes())?;
    for &s in &audio.samples {
        w.write_all(&quantize(s).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}
