//! Short-time objective intelligibility with the standard published
//! parameters: 10 kHz analysis, 256-sample Hann frames with 50% overlap,
//! 512-point FFT, 15 one-third-octave bands from 150 Hz, 384 ms segments,
//! -15 dB lower SDR bound and 40 dB silent-frame removal.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{MeasureKind, MeasureScore};
use crate::dsp::{resample, Waveform};
use crate::fft::Fft;
use crate::{Error, Matrix, Result};

const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoiParams {
    pub sample_rate_hz: u32,
    pub frame_len: usize,
    pub fft_size: usize,
    pub n_bands: usize,
    pub min_freq_hz: f64,
    /// Frames per analysis segment.
    pub segment_len: usize,
    /// Lower signal-to-distortion bound in dB.
    pub beta_db: f64,
    pub dyn_range_db: f64,
    /// Relative length difference tolerated before truncation.
    pub length_tolerance: f64,
}

impl Default for StoiParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 10_000,
            frame_len: 256,
            fft_size: 512,
            n_bands: 15,
            min_freq_hz: 150.0,
            segment_len: 30,
            beta_db: -15.0,
            dyn_range_db: 40.0,
            length_tolerance: 0.02,
        }
    }
}

/// `hanning(len + 2)[1..len+1]`: a Hann window without its zero end points.
fn inner_hann(len: usize) -> Vec<f64> {
    (1..=len).map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / (len + 1) as f64)).collect()
}

/// One-third-octave band matrix (`n_bands x (fft_size/2 + 1)`), band edges
/// snapped to the nearest FFT bin.
pub fn third_octave_bands(p: &StoiParams) -> Matrix {
    let n_bins = p.fft_size / 2 + 1;
    let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * p.sample_rate_hz as f64 / p.fft_size as f64).collect();
    let nearest = |target: f64| {
        freqs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &f)| {
                let d = (f - target) * (f - target);
                if d < best.1 {
                    (i, d)
                } else {
                    best
                }
            })
            .0
    };
    let mut obm = Matrix::zeros(p.n_bands, n_bins);
    for band in 0..p.n_bands {
        let k = band as f64;
        let lo = nearest(p.min_freq_hz * libm::pow(2.0, (2.0 * k - 1.0) / 6.0));
        let hi = nearest(p.min_freq_hz * libm::pow(2.0, (2.0 * k + 1.0) / 6.0));
        for bin in lo..hi {
            obm.set(band, bin, 1.0);
        }
    }
    obm
}

fn frame_starts(len: usize, frame_len: usize, hop: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(frame_len)).step_by(hop)
}

/// Drops frames whose clean energy is more than `dyn_range_db` below the
/// loudest clean frame, then overlap-adds what remains.
fn remove_silent_frames(x: &[f64], y: &[f64], p: &StoiParams) -> (Vec<f64>, Vec<f64>) {
    let len = p.frame_len;
    let hop = len / 2;
    let w = inner_hann(len);
    let window = |s: &[f64], start: usize| -> Vec<f64> { s[start..start + len].iter().zip(&w).map(|(a, b)| a * b).collect() };
    let starts: Vec<usize> = frame_starts(x.len(), len, hop).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let f = window(x, s);
            20.0 * libm::log10(libm::sqrt(f.iter().map(|v| v * v).sum::<f64>()) + EPS)
        })
        .collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - p.dyn_range_db - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * hop + len;
    let mut xs = alloc::vec![0.0; out_len];
    let mut ys = alloc::vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        let off = i * hop;
        for (j, (xv, yv)) in window(x, s).into_iter().zip(window(y, s)).enumerate() {
            xs[off + j] += xv;
            ys[off + j] += yv;
        }
    }
    (xs, ys)
}

/// Band envelopes `sqrt(OBM |X|^2)`, one row per band, one column per frame.
fn band_envelopes(x: &[f64], obm: &Matrix, fft: &Fft, p: &StoiParams) -> Matrix {
    let len = p.frame_len;
    let w = inner_hann(len);
    let starts: Vec<usize> = frame_starts(x.len(), len, len / 2).collect();
    let mut env = Matrix::zeros(p.n_bands, starts.len());
    for (t, &s) in starts.iter().enumerate() {
        let frame: Vec<f64> = x[s..s + len].iter().zip(&w).map(|(a, b)| a * b).collect();
        let power = fft.power_spectrum(&frame);
        for b in 0..p.n_bands {
            let e: f64 = obm.row(b).iter().zip(&power).map(|(m, pw)| m * pw).sum();
            env.set(b, t, libm::sqrt(e));
        }
    }
    env
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// STOI of `degraded` against `clean`, using the default parameters.
pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<MeasureScore> {
    stoi_with(clean, degraded, &StoiParams::default())
}

pub fn stoi_with(clean: &Waveform, degraded: &Waveform, p: &StoiParams) -> Result<MeasureScore> {
    if clean.sample_rate_hz() != degraded.sample_rate_hz() {
        return Err(Error::RateMismatch(clean.sample_rate_hz(), degraded.sample_rate_hz()));
    }
    let (lc, ld) = (clean.len(), degraded.len());
    let longer = lc.max(ld) as f64;
    if (lc.abs_diff(ld)) as f64 > p.length_tolerance * longer {
        return Err(Error::Alignment(format!(
            "clean has {lc} samples, degraded {ld}: more than {}% apart",
            p.length_tolerance * 100.0
        )));
    }
    if clean.samples().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSignal("clean signal is silent"));
    }
    if degraded.samples().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSignal("degraded signal is silent"));
    }
    let n = lc.min(ld);
    let x = resample(&Waveform::new(clean.samples()[..n].to_vec(), clean.sample_rate_hz())?, p.sample_rate_hz)?;
    let y = resample(&Waveform::new(degraded.samples()[..n].to_vec(), degraded.sample_rate_hz())?, p.sample_rate_hz)?;

    let (xs, ys) = remove_silent_frames(x.samples(), y.samples(), p);
    if xs.is_empty() {
        return Err(Error::DegenerateSignal("all frames are silent"));
    }
    let fft = Fft::new(p.fft_size);
    let obm = third_octave_bands(p);
    let x_env = band_envelopes(&xs, &obm, &fft, p);
    let y_env = band_envelopes(&ys, &obm, &fft, p);
    let n_frames = x_env.cols();
    if n_frames < p.segment_len {
        return Err(Error::TooFewFrames { needed: p.segment_len, got: n_frames });
    }

    let clip = libm::pow(10.0, -p.beta_db / 20.0);
    let seg = p.segment_len;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut xv = alloc::vec![0.0; seg];
    let mut yv = alloc::vec![0.0; seg];
    for end in seg..=n_frames {
        for b in 0..p.n_bands {
            xv.copy_from_slice(&x_env.row(b)[end - seg..end]);
            yv.copy_from_slice(&y_env.row(b)[end - seg..end]);
            let scale = norm(&xv) / (norm(&yv) + EPS);
            for (yy, &xx) in yv.iter_mut().zip(&xv) {
                *yy = (*yy * scale).min(xx * (1.0 + clip));
            }
            let mx = xv.iter().sum::<f64>() / seg as f64;
            let my = yv.iter().sum::<f64>() / seg as f64;
            xv.iter_mut().for_each(|v| *v -= mx);
            yv.iter_mut().for_each(|v| *v -= my);
            let (nx, ny) = (norm(&xv) + EPS, norm(&yv) + EPS);
            total += xv.iter().zip(&yv).map(|(a, b)| (a / nx) * (b / ny)).sum::<f64>();
            count += 1;
        }
    }
    Ok(MeasureScore { measure: MeasureKind::Stoi, value: total / count as f64, n_frames_used: n_frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_layout() {
        let obm = third_octave_bands(&StoiParams::default());
        assert_eq!((obm.rows(), obm.cols()), (15, 257));
        // bins are 19.53 Hz apart; the first band spans ~[133, 168] Hz -> bins 7..9
        let first: Vec<usize> = (0..257).filter(|&k| obm.get(0, k) == 1.0).collect();
        assert_eq!(first, alloc::vec![7, 8]);
        // bands tile without overlap
        for k in 0..257 {
            let s: f64 = (0..15).map(|b| obm.get(b, k)).sum();
            assert!(s <= 1.0);
        }
    }

    #[test]
    fn inner_hann_is_symmetric_and_nonzero() {
        let w = inner_hann(256);
        assert!(w[0] > 0.0 && (w[0] - w[255]).abs() < 1e-15);
    }

    #[test]
    fn rejects_length_mismatch_and_silence() {
        let a = Waveform::new(alloc::vec![0.1; 10000], 10000).unwrap();
        let b = Waveform::new(alloc::vec![0.1; 9000], 10000).unwrap();
        assert!(matches!(stoi(&a, &b), Err(Error::Alignment(_))));
        let z = Waveform::new(alloc::vec![0.0; 10000], 10000).unwrap();
        assert!(matches!(stoi(&z, &a), Err(Error::DegenerateSignal(_))));
        let c = Waveform::new(alloc::vec![0.1; 10000], 16000).unwrap();
        assert!(matches!(stoi(&a, &c), Err(Error::RateMismatch(..))));
    }

    #[test]
    fn short_signal_has_too_few_frames() {
        let x: Vec<f64> = (0..2000).map(|i| libm::sin(i as f64 * 0.3)).collect();
        let w = Waveform::new(x, 10000).unwrap();
        assert!(matches!(stoi(&w, &w), Err(Error::TooFewFrames { .. })));
    }
}
