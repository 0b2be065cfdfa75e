//! Low-level representations: waveforms, mixing and hand-crafted features.

mod frame;
mod mel;
mod mix;
mod norm;
mod resample;

use alloc::vec::Vec;

pub use frame::{frame_signal, window, FrameSpec, WindowKind};
pub use mel::{
    dct_ortho, fbank, hz_to_mel, mel_filter_centers_hz, mel_filterbank, mel_to_hz, mfcc, MelSpec,
    LOG_FLOOR,
};
pub use mix::{mix_at_snr, mix_components, mean_power, MixComponents};
pub use norm::{mvn, splice};
pub use resample::resample;

use crate::{Error, Matrix, Result};

/// Mono audio with its sample rate. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("waveform has no samples"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Scales every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Fbank,
    Mfcc,
    Spliced,
}

/// `N x D` matrix of per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix,
    kind: FeatureKind,
    frame_shift_ms: f64,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, kind: FeatureKind, frame_shift_ms: f64) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::EmptyInput("feature matrix needs at least one frame and one dim"));
        }
        if !values.all_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { values, kind, frame_shift_ms })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Keeps the first `n` frames (`n >= 1`).
    pub fn truncated(&self, n: usize) -> Self {
        let mut values = self.values.clone();
        values.truncate_rows(n.max(1));
        Self { values, kind: self.kind, frame_shift_ms: self.frame_shift_ms }
    }
}
