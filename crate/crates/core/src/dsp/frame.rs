use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::Waveform;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

/// Symmetric window of length `len`.
pub fn window(kind: WindowKind, len: usize) -> Vec<f64> {
    if len == 1 {
        return alloc::vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let c = libm::cos(2.0 * PI * n as f64 / denom);
            match kind {
                WindowKind::Hamming => 0.54 - 0.46 * c,
                WindowKind::Hann => 0.5 - 0.5 * c,
                WindowKind::Rectangular => 1.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub window: WindowKind,
    pub preemphasis: f64,
    pub fft_size: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            window: WindowKind::Hamming,
            preemphasis: 0.97,
            fft_size: 512,
        }
    }
}

impl FrameSpec {
    pub fn frame_len(&self, sample_rate_hz: u32) -> usize {
        libm::round(self.frame_length_ms * sample_rate_hz as f64 / 1000.0) as usize
    }

    pub fn frame_shift(&self, sample_rate_hz: u32) -> usize {
        libm::round(self.frame_shift_ms * sample_rate_hz as f64 / 1000.0) as usize
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if !(self.frame_length_ms > 0.0 && self.frame_shift_ms > 0.0) {
            return bad(format!(
                "frame length/shift must be positive, got {}/{} ms",
                self.frame_length_ms, self.frame_shift_ms
            ));
        }
        if self.frame_shift_ms > self.frame_length_ms {
            return bad(format!(
                "frame shift {} ms exceeds frame length {} ms",
                self.frame_shift_ms, self.frame_length_ms
            ));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad(format!("preemphasis {} outside [0, 1)", self.preemphasis));
        }
        if !self.fft_size.is_power_of_two() {
            return bad(format!("fft size {} is not a power of two", self.fft_size));
        }
        let len = self.frame_len(sample_rate_hz);
        if len == 0 || self.frame_shift(sample_rate_hz) == 0 {
            return bad(format!("frame spec yields empty frames at {sample_rate_hz} Hz"));
        }
        if self.fft_size < len {
            return bad(format!("fft size {} smaller than frame length {len}", self.fft_size));
        }
        Ok(())
    }

    /// `1 + floor((len - frame_len) / shift)`, or 0 when the signal is
    /// shorter than one frame.
    pub fn n_frames(&self, n_samples: usize, sample_rate_hz: u32) -> usize {
        let len = self.frame_len(sample_rate_hz);
        let shift = self.frame_shift(sample_rate_hz);
        if n_samples < len || shift == 0 {
            0
        } else {
            1 + (n_samples - len) / shift
        }
    }
}

/// Splits `w` into pre-emphasized, windowed frames (one per row).
///
/// Pre-emphasis runs over the whole signal as `y[t] = x[t] - a*x[t-1]` with
/// `x[-1] = x[0]`.
pub fn frame_signal(w: &Waveform, spec: &FrameSpec) -> Result<Matrix> {
    let sr = w.sample_rate_hz();
    spec.validate(sr)?;
    let len = spec.frame_len(sr);
    let shift = spec.frame_shift(sr);
    let x = w.samples();
    if x.len() < len {
        return Err(Error::TooShort { needed: len, got: x.len() });
    }
    let n = spec.n_frames(x.len(), sr);
    let a = spec.preemphasis;
    let emph: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(t, &v)| v - a * if t == 0 { v } else { x[t - 1] })
        .collect();
    let win = window(spec.window, len);
    let mut out = Matrix::zeros(n, len);
    for i in 0..n {
        let src = &emph[i * shift..i * shift + len];
        for ((o, &s), &wv) in out.row_mut(i).iter_mut().zip(src).zip(&win) {
            *o = s * wv;
        }
    }
    Ok(out)
}
