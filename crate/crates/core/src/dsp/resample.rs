use alloc::vec::Vec;
use core::f64::consts::PI;

use super::Waveform;
use crate::Result;

/// Zero crossings of the sinc kernel on each side of its center.
const KERNEL_ZEROS: f64 = 24.0;
/// Cutoff as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.95;
/// Largest phase count for which the polyphase table is precomputed.
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    taps: usize,
}

impl Kernel {
    fn new(up: u64, down: u64) -> Self {
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half_width = KERNEL_ZEROS / cutoff;
        Self { cutoff, half_width, taps: libm::ceil(half_width) as usize }
    }

    /// Blackman-windowed sinc at offset `tau` input samples.
    fn eval(&self, tau: f64) -> f64 {
        if tau.abs() >= self.half_width {
            return 0.0;
        }
        let x = self.cutoff * tau;
        let sinc = if x == 0.0 { 1.0 } else { libm::sin(PI * x) / (PI * x) };
        let r = tau / self.half_width;
        let win = 0.42 + 0.5 * libm::cos(PI * r) + 0.08 * libm::cos(2.0 * PI * r);
        self.cutoff * sinc * win
    }

    /// Weights for inputs `base - taps + 1 ..= base + taps` at fractional
    /// position `frac` past `base`.
    fn weights(&self, frac: f64, out: &mut Vec<f64>) {
        out.clear();
        let k = self.taps as i64;
        out.extend((-k + 1..=k).map(|d| self.eval(frac - d as f64)));
    }
}

/// Band-limited rational resampling with a windowed-sinc polyphase filter.
///
/// The output has `round(len * target / source)` samples. Resampling to the
/// source rate returns the input unchanged.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    let source_hz = w.sample_rate_hz();
    if target_hz == 0 {
        return Err(crate::Error::InvalidParameter("target rate must be positive".into()));
    }
    if target_hz == source_hz {
        return Ok(w.clone());
    }
    let g = gcd(source_hz as u64, target_hz as u64);
    let up = target_hz as u64 / g;
    let down = source_hz as u64 / g;
    let x = w.samples();
    let out_len = ((x.len() as u64 * up + down / 2) / down) as usize;
    let kernel = Kernel::new(up, down);
    let k = kernel.taps as i64;

    let table: Option<Vec<Vec<f64>>> = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|p| {
                let mut v = Vec::new();
                kernel.weights(p as f64 / up as f64, &mut v);
                v
            })
            .collect()
    });

    let mut scratch = Vec::new();
    let mut y = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        let pos = j * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let weights: &[f64] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                kernel.weights(phase as f64 / up as f64, &mut scratch);
                &scratch
            }
        };
        let mut acc = 0.0;
        for (d, &wt) in (-k + 1..=k).zip(weights) {
            let idx = base + d;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += wt * x[idx as usize];
            }
        }
        y.push(acc);
    }
    Waveform::new(y, target_hz)
}
