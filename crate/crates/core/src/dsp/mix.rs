use alloc::vec::Vec;

use super::Waveform;
use crate::{Error, Result};

/// Mean squared amplitude.
pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// The two additive parts of a mixture before summation.
#[derive(Debug, Clone, PartialEq)]
pub struct MixComponents {
    pub clean: Vec<f64>,
    pub scaled_noise: Vec<f64>,
    pub gain: f64,
    pub sample_rate_hz: u32,
}

impl MixComponents {
    pub fn mixture(&self) -> Waveform {
        let samples = self.clean.iter().zip(&self.scaled_noise).map(|(c, n)| c + n).collect();
        Waveform::new(samples, self.sample_rate_hz).expect("clean is non-empty")
    }

    /// `10 log10(P_clean / P_scaled_noise)` recomputed from the parts.
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * libm::log10(mean_power(&self.clean) / mean_power(&self.scaled_noise))
    }
}

/// Splits the mixing step: noise is read from `noise_offset` on, wrapping
/// around cyclically until it covers the clean signal, and scaled so that
/// full-length mean powers satisfy `P_clean / P_noise = 10^(snr_db/10)`.
pub fn mix_components(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    noise_offset: usize,
) -> Result<MixComponents> {
    if clean.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::RateMismatch(clean.sample_rate_hz(), noise.sample_rate_hz()));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("snr {snr_db} dB is not finite")));
    }
    let n = noise.samples();
    let segment: Vec<f64> = (0..clean.len()).map(|t| n[(noise_offset + t) % n.len()]).collect();
    let p_clean = mean_power(clean.samples());
    let p_noise = mean_power(&segment);
    if p_clean <= 0.0 {
        return Err(Error::DegenerateSignal("clean signal has zero power"));
    }
    if p_noise <= 0.0 {
        return Err(Error::DegenerateSignal("noise segment has zero power"));
    }
    let gain = libm::sqrt(p_clean / (p_noise * libm::pow(10.0, snr_db / 10.0)));
    Ok(MixComponents {
        clean: clean.samples().to_vec(),
        scaled_noise: segment.into_iter().map(|v| v * gain).collect(),
        gain,
        sample_rate_hz: clean.sample_rate_hz(),
    })
}

/// `clean + g * noise_segment` at the requested SNR.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, noise_offset: usize) -> Result<Waveform> {
    Ok(mix_components(clean, noise, snr_db, noise_offset)?.mixture())
}
