#![allow(dead_code)]

use msunique::decoder::{DecoderModel, TrainingConfig};
use msunique::filterbank::{classify_filters, FilterBank, COLOR_THRESHOLD, EDGE_THRESHOLD};
use msunique::imageio::{RgbImage, SubjectiveEntry};
use msunique::patchpipe::WhiteningTransform;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bank with random (untrained) weights; labels come from the real
/// classifier so kinds are mixed.
pub fn random_bank(patch_side: usize, sizes: &[usize], seed: u64) -> FilterBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3 * patch_side * patch_side;
    let mut models = Vec::new();
    let mut labels = Vec::new();
    for &h in sizes {
        // Sparse columns give heavy tails (edge-like); dense ones do not.
        let w1 = DMatrix::from_fn(d, h, |i, j| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if j % 3 == 0 && i % 17 != 0 {
                0.01 * v
            } else {
                v
            }
        });
        let b1 = DVector::from_fn(h, |_, _| rng.random_range(-0.5..0.5));
        let w2 = DMatrix::from_fn(h, d, |_, _| rng.random_range(-0.1..0.1));
        let b2 = DVector::from_fn(d, |_, _| rng.random_range(-0.1..0.1));
        let m = DecoderModel::new(w1, b1, w2, b2).unwrap();
        labels.push(classify_filters(&m, EDGE_THRESHOLD, COLOR_THRESHOLD).unwrap());
        models.push(m);
    }
    let mean = DVector::from_fn(d, |_, _| rng.random_range(0.3..0.7));
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.05..0.05));
    let zca = &a + a.transpose() + DMatrix::identity(d, d);
    FilterBank {
        patch_side,
        whitening: WhiteningTransform::from_parts(mean, zca, 0.1).unwrap(),
        models,
        labels,
        config: TrainingConfig {
            seed: -17,
            ..TrainingConfig::default()
        },
        suppression_tau: 0.025,
    }
}

pub fn entry(key: &str, subjective: f64, std: Option<f64>) -> SubjectiveEntry {
    SubjectiveEntry {
        distorted_key: key.to_string(),
        reference_key: format!("ref_{key}"),
        distorted_path: key.into(),
        reference_path: format!("ref_{key}").into(),
        subjective_score: subjective,
        score_std: std,
    }
}

pub fn image_from_values(w: usize, h: usize, values: &[f64]) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let i = 3 * (y * w + x);
        [values[i], values[i + 1], values[i + 2]]
    })
}
