use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Reads a 16-bit PCM RIFF/WAVE file, averaging channels to mono and scaling
/// samples by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedCodec {
            path: path.to_path_buf(),
            reason: format!("{:?} {}-bit; only 16-bit PCM is supported", spec.sample_format, spec.bits_per_sample),
        });
    }
    let channels = spec.channels.max(1) as usize;
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    let samples = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / 32768.0).sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::MissingFile(path.to_path_buf())
        }
        hound::Error::Unsupported => Error::UnsupportedCodec {
            path: path.to_path_buf(),
            reason: "unsupported WAVE encoding".into(),
        },
        hound::Error::IoError(io) => Error::MalformedWav { path: path.to_path_buf(), reason: io.to_string() },
        other => Error::MalformedWav { path: path.to_path_buf(), reason: other.to_string() },
    }
}

/// Writes mono 16-bit PCM, clamping samples to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let path = path.as_ref();
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::MalformedWav { path: path.to_path_buf(), reason: other.to_string() },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    for &s in &wave.samples {
        writer.write_sample(quantize(s)).map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}

pub(crate) fn quantize(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
