//! Multi-model, sharpness-weighted unsupervised image quality estimation.
//!
//! The pipeline learns several sparse linear decoders on ZCA-whitened YGCr
//! image patches, labels every learned filter as edge, color or neutral by
//! its kurtosis, and scores a distorted image against its reference by the
//! rank correlation of their weighted filter responses.
//!
//! Module map:
//!
//! * [`imageio`]: PPM decoding/encoding and subjective-score manifests.
//! * [`colorspace`]: RGB to YGCr conversion and channel correlation.
//! * [`patchpipe`]: patch extraction and ZCA whitening.
//! * [`decoder`]: the sparse linear decoder, its objective and training.
//! * [`optim`]: limited-memory BFGS with a strong-Wolfe line search.
//! * [`filterbank`]: multi-width training, kurtosis labels, persistence.
//! * [`scoring`]: feature generation and the quality score.
//! * [`evaluation`]: logistic regression and agreement statistics.
//! * [`histogram`]: histogram distances behind a name-keyed registry.
//! * [`synthetic`]: procedural test images and degradations.

pub mod colorspace;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod filterbank;
pub mod histogram;
pub mod imageio;
pub mod optim;
pub mod patchpipe;
pub mod scoring;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits, enough for a lossless round trip.
pub fn format_sig17(x: f64) -> String {
    format!("{:.16e}", x)
}
