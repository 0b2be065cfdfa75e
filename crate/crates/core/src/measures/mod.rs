//! Utterance-level measures: AGE, the entropy confidence baseline and STOI.

mod stoi;

use core::fmt;
use core::str::FromStr;

pub use stoi::{stoi, stoi_with, third_octave_bands, StoiParams};

use crate::am::PosteriorMatrix;
use crate::{Error, Result};

/// Floor applied to degraded posteriors before the log.
pub const POSTERIOR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasureKind {
    Age,
    Entropy,
    Stoi,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [MeasureKind::Age, MeasureKind::Entropy, MeasureKind::Stoi];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Age => "age",
            MeasureKind::Entropy => "entropy",
            MeasureKind::Stoi => "stoi",
        }
    }

    /// Whether the measure needs acoustic-model posteriors.
    pub fn uses_posteriors(self) -> bool {
        matches!(self, MeasureKind::Age | MeasureKind::Entropy)
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" => Ok(MeasureKind::Age),
            "entropy" => Ok(MeasureKind::Entropy),
            "stoi" => Ok(MeasureKind::Stoi),
            other => Err(Error::InvalidParameter(alloc::format!("unknown measure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureScore {
    pub measure: MeasureKind,
    pub value: f64,
    pub n_frames_used: usize,
}

/// Cross-entropy of degraded posteriors against clean posteriors, averaged
/// over frames:
///
/// `m = -(1/N) sum_n sum_i P_C[n,i] ln max(P_D[n,i], 1e-10)`
///
/// Both matrices must come from the same acoustic model and be frame aligned.
pub fn age(clean: &PosteriorMatrix, degraded: &PosteriorMatrix) -> Result<MeasureScore> {
    let (pc, pd) = (clean.values(), degraded.values());
    if pc.rows() != pd.rows() || pc.cols() != pd.cols() {
        return Err(Error::Alignment(alloc::format!(
            "clean posteriors are {}x{}, degraded {}x{}",
            pc.rows(),
            pc.cols(),
            pd.rows(),
            pd.cols()
        )));
    }
    let n = pc.rows();
    if n == 0 {
        return Err(Error::EmptyInput("no frames to score"));
    }
    let total: f64 = pc
        .iter_rows()
        .zip(pd.iter_rows())
        .map(|(c, d)| {
            c.iter()
                .zip(d)
                .map(|(&pc, &pd)| pc * libm::log(pd.max(POSTERIOR_FLOOR)))
                .sum::<f64>()
        })
        .sum();
    Ok(MeasureScore { measure: MeasureKind::Age, value: -total / n as f64, n_frames_used: n })
}

/// Mean per-frame entropy of the degraded posteriors (acoustic confidence).
/// Identical to `age(p, p)`.
pub fn entropy_confidence(degraded: &PosteriorMatrix) -> Result<MeasureScore> {
    let s = age(degraded, degraded)?;
    Ok(MeasureScore { measure: MeasureKind::Entropy, ..s })
}
