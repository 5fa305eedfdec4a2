mod common;

use msunique::colorspace::{channel_cross_correlation, to_ygcr, Channel};
use msunique::imageio::RgbImage;
use msunique::patchpipe::{
    apply_whitening, assemble_tiles, extract_random_patches, extract_tiled_patches, fit_whitening,
    mean_and_covariance, PatchMatrix,
};
use msunique::scoring::{quality_score, spearman, suppress, FeatureVector};
use msunique::stats::average_ranks;
use msunique::synthetic::{gaussian_blur, natural_like_image};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{image_from_values, random_bank};

fn image_strategy(max_side: usize) -> impl Strategy<Value = RgbImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0..=1.0f64, 3 * w * h)
            .prop_map(move |v| image_from_values(w, h, &v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gray_images_have_neutral_chroma(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
        let img = natural_like_image(w, h, seed);
        let gray = RgbImage::from_fn(w, h, |x, y| { let v = img.pixel(x, y)[1]; [v, v, v] });
        let t = to_ygcr(&gray);
        for (i, &v) in gray.g().iter().enumerate() {
            prop_assert!((t.y()[i] - v).abs() < 1e-15);
            prop_assert!((t.cr()[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn ygcr_is_pixelwise(img in image_strategy(5), shift in 0usize..25) {
        // Cyclically shifting the pixel order commutes with the transform.
        let n = img.width() * img.height();
        let k = shift % n;
        let rot = |p: &[f64]| { let mut v = p.to_vec(); v.rotate_left(k); v };
        let shifted = RgbImage::from_planes(img.width(), img.height(), rot(img.r()), rot(img.g()), rot(img.b())).unwrap();
        let (a, b) = (to_ygcr(&img), to_ygcr(&shifted));
        prop_assert_eq!(rot(a.y()), b.y().to_vec());
        prop_assert_eq!(rot(a.g()), b.g().to_vec());
        prop_assert_eq!(rot(a.cr()), b.cr().to_vec());
    }

    #[test]
    fn correlation_is_bounded_and_symmetric(img in image_strategy(6)) {
        for (a, b) in [(Channel::R, Channel::G), (Channel::G, Channel::B), (Channel::R, Channel::B)] {
            if let (Ok(ab), Ok(ba)) = (channel_cross_correlation(&img, a, b), channel_cross_correlation(&img, b, a)) {
                prop_assert!(ab.abs() <= 1.0);
                prop_assert_eq!(ab, ba);
            }
        }
    }

    #[test]
    fn tiles_reassemble_the_cropped_image(w in 2usize..20, h in 2usize..20, p in 1usize..5, seed in any::<u64>()) {
        prop_assume!(w >= p && h >= p);
        let img = to_ygcr(&natural_like_image(w, h, seed));
        let tiles = extract_tiled_patches(&img, p).unwrap();
        let tw = w / p;
        let planes = assemble_tiles(&tiles, tw).unwrap();
        let cw = tw * p;
        for (c, plane) in planes.iter().enumerate() {
            for y in 0..(h / p) * p {
                for x in 0..cw {
                    prop_assert_eq!(plane[y * cw + x], img.planes()[c][y * w + x]);
                }
            }
        }
    }

    #[test]
    fn random_extraction_is_reproducible(seed in any::<u64>(), count in 1usize..20) {
        let img = to_ygcr(&natural_like_image(20, 15, 3));
        let a = extract_random_patches(&img, count, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = extract_random_patches(&img, count, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zca_is_symmetric_and_whitens(seed in any::<u64>(), eps in prop_oneof![Just(0.0), 0.0..1.0f64]) {
        let img = to_ygcr(&natural_like_image(40, 40, seed));
        let patches = extract_random_patches(&img, 300, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let w = fit_whitening(&patches, eps).unwrap();
        prop_assert!((w.zca() - w.zca().transpose()).amax() < 1e-10);
        if eps == 0.0 {
            let (_, cov) = mean_and_covariance(apply_whitening(&w, &patches).unwrap().data());
            prop_assert!((cov - DMatrix::<f64>::identity(12, 12)).amax() < 1e-8);
        }
    }

    #[test]
    fn spearman_is_rank_invariant(x in prop::collection::vec(-50i32..50, 3..40), shift in -5.0..5.0f64) {
        let a: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = a.iter().rev().map(|v| v * 0.5 + 1.0).collect();
        prop_assume!(a.iter().any(|v| *v != a[0]));
        let base = spearman(&a, &b).unwrap();
        let f = |v: &f64| (v / 10.0).exp() + shift;
        let g = |v: &f64| v.powi(3) - 7.0;
        let ta: Vec<f64> = a.iter().map(f).collect();
        let tb: Vec<f64> = b.iter().map(g).collect();
        prop_assert_eq!(spearman(&ta, &tb).unwrap(), base);
        prop_assert!(base.abs() <= 1.0);
    }

    #[test]
    fn ranks_match_counting_oracle(x in prop::collection::vec(0i32..6, 1..30)) {
        let a: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let ranks = average_ranks(&a);
        for (i, &v) in a.iter().enumerate() {
            let below = a.iter().filter(|&&u| u < v).count() as f64;
            let equal = a.iter().filter(|&&u| u == v).count() as f64;
            prop_assert_eq!(ranks[i], below + (equal + 1.0) / 2.0);
        }
    }

    #[test]
    fn suppression_is_idempotent(values in prop::collection::vec(0.0..1.0f64, 12), tau in 0.0..0.5f64) {
        let v = FeatureVector { values: values.clone(), filter_weights: vec![2.0, 1.0, 0.5, 1.0], suppressed: false };
        let once = suppress(v, tau);
        prop_assert_eq!(suppress(once.clone(), tau).values, once.values.clone());
        for (i, (&s, &orig)) in once.values.iter().zip(&values).enumerate() {
            let w = [2.0, 1.0, 0.5, 1.0][i % 4];
            prop_assert!(s == 0.0 || (s == orig && orig / w >= tau));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quality_is_symmetric_with_unit_self_score(seed in any::<u64>(), sigma in 0.5..3.0f64) {
        let bank = random_bank(4, &[6, 9], 11);
        let img = natural_like_image(24, 20, seed);
        let other = gaussian_blur(&img, sigma);
        prop_assert_eq!(quality_score(&bank, &img, &img).unwrap().score, 1.0);
        let ab = quality_score(&bank, &img, &other).unwrap();
        let ba = quality_score(&bank, &other, &img).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab.score));
    }
}

#[test]
fn whitening_with_epsilon_shrinks_each_eigenvalue() {
    // Covariance with eigenvalues 4, 1, 0.25 along a rotated basis.
    let q = {
        let (c, s) = (0.6f64, 0.8f64);
        DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    };
    let lambdas: [f64; 3] = [4.0, 1.0, 0.25];
    // ±√(3λ) along each axis over 6 columns gives variance λ along that axis.
    let mut data = DMatrix::zeros(3, 6);
    for (k, &l) in lambdas.iter().enumerate() {
        let v = q.column(k) * (3.0 * l).sqrt();
        data.set_column(2 * k, &v);
        data.set_column(2 * k + 1, &(-v));
    }
    let patches = PatchMatrix::new(1, data).unwrap();
    let w = fit_whitening(&patches, 0.1).unwrap();
    let (_, cov) = mean_and_covariance(apply_whitening(&w, &patches).unwrap().data());
    let mut got: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    got.sort_by(f64::total_cmp);
    let mut want: Vec<f64> = lambdas.iter().map(|l| l / (l + 0.1)).collect();
    want.sort_by(f64::total_cmp);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}
