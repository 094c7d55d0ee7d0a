//! RIFF/WAVE PCM16 mono I/O.

use std::io;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{bail, Error, Result};

const PCM16_SCALE: f64 = 32768.0;

fn map_read_error(e: hound::Error) -> Error {
    match e {
        // the file is already open, so read failures mean a short or
        // malformed stream rather than a filesystem problem
        hound::Error::IoError(io) => Error::Format(format!("truncated RIFF/WAVE data: {io}")),
        hound::Error::FormatError(msg) => Error::Format(msg.into()),
        hound::Error::Unsupported => Error::Unsupported("WAVE encoding".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Reads a mono PCM16 WAV file. Samples are scaled by 1/32768; the sample
/// rate is passed through from the header without resampling.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let file = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
    let reader = WavReader::new(file).map_err(map_read_error)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        bail!(Unsupported, "{} channels (only mono is supported)", spec.channels);
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        bail!(
            Unsupported,
            "{:?} with {} bits per sample (only PCM16 is supported)",
            spec.sample_format,
            spec.bits_per_sample
        );
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / PCM16_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(map_read_error)?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Quantizes one sample to PCM16 with saturation.
pub fn to_pcm16(sample: f64) -> i16 {
    (sample * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a clip as mono PCM16, clamping samples to the representable range.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    if clip.samples.iter().any(|s| !s.is_finite()) {
        bail!(Data, "clip contains non-finite samples");
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(io::Error::other(other.to_string())),
    };
    let mut writer = WavWriter::create(path.as_ref(), spec).map_err(to_io)?;
    for &s in &clip.samples {
        writer.write_sample(to_pcm16(s)).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}
