//! RIFF/WAVE reading (PCM16 or float32, any channel count) and PCM16 writing.

use std::path::Path;

use agekit_core::dsp::Waveform;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

fn hound_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::format(path, other),
    }
}

/// Reads channel 0 of a WAV file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    load_wav_channel(path, 0)
}

/// Reads one channel of a PCM16 or float32 WAV file, scaled to `[-1, 1]`.
pub fn load_wav_channel(path: impl AsRef<Path>, channel: usize) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(Error::format(path, format!("channel {channel} requested, file has {channels}")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(Error::format(path, format!("unsupported encoding: {bits}-bit {format:?}")));
        }
    }
    .map_err(|e| hound_error(path, e))?;
    let samples: Vec<f64> = interleaved.into_iter().skip(channel).step_by(channels).collect();
    if samples.is_empty() {
        return Err(agekit_core::Error::EmptyInput("wav samples").into());
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "non-finite float sample"));
    }
    Ok(Waveform::new(samples, spec.sample_rate)?)
}

/// PCM16 code for one sample: clipped to `[-1, 1]`, scaled by 32768 and rounded.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// The waveform exactly as it reads back after `save_wav`.
pub fn pcm16_roundtrip(w: &Waveform) -> Waveform {
    let samples = w.samples().iter().map(|&x| quantize_pcm16(x) as f64 / 32768.0).collect();
    Waveform::new(samples, w.sample_rate_hz()).expect("same length and rate")
}

/// Writes a mono 16-bit PCM file.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if w.samples().iter().any(|v| !v.is_finite()) {
        return Err(agekit_core::Error::NonFinite("waveform samples").into());
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &x in w.samples() {
        writer.write_sample(quantize_pcm16(x)).map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}
