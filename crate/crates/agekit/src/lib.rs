//! File formats, corpus harness and fixture generation on top of
//! `agekit_core`.

mod error;
pub mod features_io;
pub mod fixture;
pub mod harness;
pub mod manifest;
pub mod model_io;
pub mod wav;

pub use agekit_core as core;
pub use error::{Error, Result};
