//! Acoustics-guided evaluation (AGE) of speech enhancement for ASR.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! pieces of the pipeline:
//!
//! * [`dsp`]: SNR-controlled mixing, framing, FBANK/MFCC features, resampling,
//!   context splicing and mean/variance normalization.
//! * [`am`]: a feed-forward acoustic model producing state posterior
//!   probabilities, plus a small full-batch trainer used to build fixtures.
//! * [`measures`]: the AGE cross-entropy between clean and degraded
//!   posteriors, the entropy confidence baseline and STOI.
//! * [`stats`]: Pearson/Spearman correlation and the logistic mapping fitted
//!   by least squares that turns a measure into a WER estimate.
//!
//! File formats, the corpus harness and the command line live in the
//! companion `agekit` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod am;
pub mod dsp;
mod error;
pub mod fft;
pub mod matrix;
pub mod measures;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::Matrix;
