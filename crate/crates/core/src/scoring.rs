//! Feature generation and the rank-correlation quality score.

use crate::colorspace::{to_ygcr, YgcrImage};
use crate::decoder::forward_responses;
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::imageio::RgbImage;
use crate::patchpipe::{apply_whitening, extract_tiled_patches};
use crate::stats;

/// Exponent applied to the Spearman correlation.
pub const SCORE_EXPONENT: i32 = 10;

/// Weighted filter responses of one image.
///
/// Layout is patch-major: for each tile, every model in bank order, every
/// filter of that model. `filter_weights` has one entry per filter (the
/// pattern repeats for each patch).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub filter_weights: Vec<f64>,
    pub suppressed: bool,
}

impl FeatureVector {
    pub fn patch_count(&self) -> usize {
        self.values.len() / self.filter_weights.len()
    }

    /// Unweighted response behind entry `i`. Weights are powers of two, so
    /// the division is exact.
    pub fn raw(&self, i: usize) -> f64 {
        self.values[i] / self.filter_weights[i % self.filter_weights.len()]
    }
}

/// Zeroes every entry whose unweighted response is below `tau`.
pub fn suppress(mut v: FeatureVector, tau: f64) -> FeatureVector {
    let period = v.filter_weights.len();
    for (i, x) in v.values.iter_mut().enumerate() {
        if *x / v.filter_weights[i % period] < tau {
            *x = 0.0;
        }
    }
    v.suppressed = true;
    v
}

/// Weighted, unsuppressed responses of every tile to every filter.
pub fn raw_features(bank: &FilterBank, img: &YgcrImage) -> Result<FeatureVector> {
    let tiles = extract_tiled_patches(img, bank.patch_side)?;
    let white = apply_whitening(&bank.whitening, &tiles)?;
    let weights = bank.filter_weights();
    let total = weights.len();
    let mut values = vec![0.0; tiles.count() * total];
    let mut offset = 0;
    for (model, labels) in bank.models.iter().zip(&bank.labels) {
        let s = forward_responses(model, &white)?;
        for (n, col) in s.column_iter().enumerate() {
            let base = n * total + offset;
            for (j, (&r, l)) in col.iter().zip(labels).enumerate() {
                values[base + j] = r * l.weight();
            }
        }
        offset += model.hidden();
    }
    Ok(FeatureVector {
        values,
        filter_weights: weights,
        suppressed: false,
    })
}

/// Tiles, whitens with the bank's frozen transform, filters through every
/// model, weights by filter kind and applies the bank's suppression.
pub fn image_features(bank: &FilterBank, img: &YgcrImage) -> Result<FeatureVector> {
    Ok(suppress(raw_features(bank, img)?, bank.suppression_tau))
}

/// Pearson correlation of average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    stats::check_pair(x, y)?;
    let (rx, ry) = (stats::average_ranks(x), stats::average_ranks(y));
    stats::pearson(&rx, &ry).map_err(|e| match e {
        Error::ZeroVariance => Error::ZeroRankVariance,
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    /// Spearman correlation of the two feature vectors.
    pub rho: f64,
    /// `rho^10`.
    pub score: f64,
}

impl Quality {
    pub fn from_rho(rho: f64) -> Self {
        Self {
            rho,
            score: rho.powi(SCORE_EXPONENT),
        }
    }
}

/// A scored (reference, distorted) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRecord {
    pub reference_id: String,
    pub distorted_id: String,
    pub quality: Quality,
}

pub fn quality_score(
    bank: &FilterBank,
    reference: &RgbImage,
    distorted: &RgbImage,
) -> Result<Quality> {
    if !reference.same_dimensions(distorted) {
        return Err(Error::DimensionMismatch(format!(
            "reference {}x{} vs distorted {}x{}",
            reference.width(),
            reference.height(),
            distorted.width(),
            distorted.height()
        )));
    }
    let fr = image_features(bank, &to_ygcr(reference))?;
    let fd = image_features(bank, &to_ygcr(distorted))?;
    Ok(Quality::from_rho(spearman(&fr.values, &fd.values)?))
}
