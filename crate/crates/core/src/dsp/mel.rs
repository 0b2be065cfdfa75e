use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{frame_signal, FeatureKind, FeatureMatrix, FrameSpec, Waveform};
use crate::fft::Fft;
use crate::{Error, Matrix, Result};

/// Floor applied to filterbank energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelSpec {
    pub n_filters: usize,
    pub low_freq_hz: f64,
    /// `None` means the Nyquist frequency of the signal.
    pub high_freq_hz: Option<f64>,
    pub n_cepstra: usize,
}

impl Default for MelSpec {
    fn default() -> Self {
        Self { n_filters: 40, low_freq_hz: 20.0, high_freq_hz: None, n_cepstra: 13 }
    }
}

impl MelSpec {
    pub fn high_freq(&self, sample_rate_hz: u32) -> f64 {
        self.high_freq_hz.unwrap_or(sample_rate_hz as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let high = self.high_freq(sample_rate_hz);
        if self.n_filters == 0 || self.n_cepstra == 0 {
            return Err(Error::InvalidParameter("mel filter and cepstra counts must be positive".into()));
        }
        if self.n_cepstra > self.n_filters {
            return Err(Error::InvalidParameter(format!(
                "{} cepstra requested from {} filters",
                self.n_cepstra, self.n_filters
            )));
        }
        if !(self.low_freq_hz >= 0.0 && self.low_freq_hz < high && high <= nyquist) {
            return Err(Error::InvalidParameter(format!(
                "mel band [{}, {high}] Hz invalid for Nyquist {nyquist} Hz",
                self.low_freq_hz
            )));
        }
        Ok(())
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters (rows) over FFT bins `0..=fft_size/2` (columns).
///
/// Filter `j` rises from mel point `j` to a peak of 1 at point `j+1` and falls
/// to zero at point `j+2`, with `n_filters + 2` points equally spaced in mel
/// between the band edges. Weights are linear in mel.
pub fn mel_filterbank(spec: &MelSpec, fft_size: usize, sample_rate_hz: u32) -> Matrix {
    let n_bins = fft_size / 2 + 1;
    let lo = hz_to_mel(spec.low_freq_hz);
    let hi = hz_to_mel(spec.high_freq(sample_rate_hz));
    let step = (hi - lo) / (spec.n_filters + 1) as f64;
    let points: Vec<f64> = (0..spec.n_filters + 2).map(|i| lo + step * i as f64).collect();
    let bin_mels: Vec<f64> = (0..n_bins)
        .map(|k| hz_to_mel(k as f64 * sample_rate_hz as f64 / fft_size as f64))
        .collect();
    let mut bank = Matrix::zeros(spec.n_filters, n_bins);
    for j in 0..spec.n_filters {
        let (l, c, r) = (points[j], points[j + 1], points[j + 2]);
        for (k, &m) in bin_mels.iter().enumerate() {
            let w = if m > l && m <= c {
                (m - l) / (c - l)
            } else if m > c && m < r {
                (r - m) / (r - c)
            } else {
                0.0
            };
            bank.set(j, k, w);
        }
    }
    bank
}

/// Center frequency in Hz of each mel filter.
pub fn mel_filter_centers_hz(spec: &MelSpec, sample_rate_hz: u32) -> Vec<f64> {
    let lo = hz_to_mel(spec.low_freq_hz);
    let hi = hz_to_mel(spec.high_freq(sample_rate_hz));
    let step = (hi - lo) / (spec.n_filters + 1) as f64;
    (1..=spec.n_filters).map(|i| mel_to_hz(lo + step * i as f64)).collect()
}

/// Log mel filterbank energies, one row per frame.
pub fn fbank(w: &Waveform, fspec: &FrameSpec, mspec: &MelSpec) -> Result<FeatureMatrix> {
    let sr = w.sample_rate_hz();
    mspec.validate(sr)?;
    let frames = frame_signal(w, fspec)?;
    let fft = Fft::new(fspec.fft_size);
    let bank = mel_filterbank(mspec, fspec.fft_size, sr);
    let mut out = Matrix::zeros(frames.rows(), mspec.n_filters);
    for (i, frame) in frames.iter_rows().enumerate() {
        let power = fft.power_spectrum(frame);
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            let e: f64 = bank.row(j).iter().zip(&power).map(|(b, p)| b * p).sum();
            *o = libm::log(e.max(LOG_FLOOR));
        }
    }
    FeatureMatrix::new(out, FeatureKind::Fbank, fspec.frame_shift_ms)
}

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
pub fn dct_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { libm::sqrt(1.0 / n) } else { libm::sqrt(2.0 / n) };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, &v)| v * libm::cos(PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)))
                    .sum::<f64>()
        })
        .collect()
}

/// Cepstra `0..n_cepstra` of the log filterbank rows.
pub fn mfcc(w: &Waveform, fspec: &FrameSpec, mspec: &MelSpec) -> Result<FeatureMatrix> {
    let fb = fbank(w, fspec, mspec)?;
    let n_ceps = mspec.n_cepstra;
    let n_filt = mspec.n_filters as f64;
    // cosine table shared by all frames
    let table: Vec<f64> = (0..n_ceps)
        .flat_map(|k| {
            let scale = if k == 0 { libm::sqrt(1.0 / n_filt) } else { libm::sqrt(2.0 / n_filt) };
            (0..mspec.n_filters).map(move |i| {
                scale * libm::cos(PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n_filt))
            })
        })
        .collect();
    let mut out = Matrix::zeros(fb.n_frames(), n_ceps);
    for (r, row) in fb.values().iter_rows().enumerate() {
        for (k, o) in out.row_mut(r).iter_mut().enumerate() {
            let basis = &table[k * mspec.n_filters..(k + 1) * mspec.n_filters];
            *o = basis.iter().zip(row).map(|(b, v)| b * v).sum();
        }
    }
    FeatureMatrix::new(out, FeatureKind::Mfcc, fspec.frame_shift_ms)
}
