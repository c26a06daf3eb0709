//! 16-bit PCM mono WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::Signal;

const FULL_SCALE: f64 = i16::MAX as f64;

fn wav_err(path: &Path, source: hound::Error) -> Error {
    match source {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

/// Quantizes one sample to 16 bits, clipping to full scale.
pub fn quantize(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE) as i16
}

pub fn dequantize(q: i16) -> f64 {
    f64::from(q) / FULL_SCALE
}

pub fn write_wav(path: &Path, sig: &Signal) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &x in sig.samples() {
        w.write_sample(quantize(x)).map_err(|e| wav_err(path, e))?;
    }
    w.finalize().map_err(|e| wav_err(path, e))
}

pub fn read_wav(path: &Path) -> Result<Signal> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            reason: format!("expected mono, found {} channels", spec.channels),
        });
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            reason: format!(
                "expected 16-bit integer PCM, found {} bits ({:?})",
                spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(dequantize))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e))?;
    if samples.is_empty() {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            reason: "no samples".into(),
        });
    }
    Signal::new(samples, spec.sample_rate)
}
