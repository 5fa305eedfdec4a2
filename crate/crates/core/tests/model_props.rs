mod common;

use msunique::decoder::{
    forward_responses, init_model, objective_and_gradient, train_decoder, LossScale, TrainingConfig,
};
use msunique::filterbank::{
    classify_filters, kurtosis_bias_corrected, label_counts, COLOR_THRESHOLD, EDGE_THRESHOLD,
};
use msunique::patchpipe::PatchMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn direct_moment_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let g2 = m4 / (m2 * m2) - 3.0;
    (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0) + 3.0
}

fn patches(d_side: usize, n: usize, seed: u64) -> PatchMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3 * d_side * d_side;
    PatchMatrix::new(
        d_side,
        DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng)),
    )
    .unwrap()
}

fn config_strategy() -> impl Strategy<Value = TrainingConfig> {
    (
        0.01..0.5f64,
        0.0..8.0f64,
        0.0..0.01f64,
        prop_oneof![Just(LossScale::Mean), Just(LossScale::Sum)],
    )
        .prop_map(|(rho, beta, lambda, loss_scale)| TrainingConfig {
            rho,
            beta,
            lambda,
            loss_scale,
            ..TrainingConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kurtosis_matches_direct_moments(x in prop::collection::vec(-10.0..10.0f64, 4..80)) {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        prop_assume!(x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) > 1e-6);
        let k = kurtosis_bias_corrected(&x).unwrap();
        let o = direct_moment_kurtosis(&x);
        prop_assert!((k - o).abs() <= 1e-12 * o.abs().max(1.0), "{k} vs {o}");
    }

    #[test]
    fn objective_is_non_negative(cfg in config_strategy(), seed in any::<u64>()) {
        let p = patches(1, 15, seed);
        let m = init_model(3, 4, seed as i64);
        let (j, _) = objective_and_gradient(&m, &p, &cfg).unwrap();
        prop_assert!(j >= 0.0);
    }

    #[test]
    fn gradient_matches_central_differences(cfg in config_strategy(), seed in any::<u64>()) {
        let p = patches(1, 10, seed);
        let mut m = init_model(3, 4, seed as i64);
        let (_, g) = objective_and_gradient(&m, &p, &cfg).unwrap();
        let analytic = g.flatten();
        let x0 = m.params();
        let h = 1e-5;
        for i in 0..x0.len() {
            let mut x = x0.clone();
            x[i] += h;
            m.set_params(&x);
            let fp = objective_and_gradient(&m, &p, &cfg).unwrap().0;
            x[i] -= 2.0 * h;
            m.set_params(&x);
            let fm = objective_and_gradient(&m, &p, &cfg).unwrap().0;
            let numeric = (fp - fm) / (2.0 * h);
            prop_assert!((analytic[i] - numeric).abs() <= 1e-6 * analytic[i].abs().max(numeric.abs()).max(1.0),
                "coordinate {i}: {} vs {numeric}", analytic[i]);
        }
    }

    #[test]
    fn responses_lie_strictly_inside_unit_interval(seed in any::<u64>()) {
        let p = patches(2, 25, seed);
        let s = forward_responses(&init_model(12, 7, seed as i64), &p).unwrap();
        prop_assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn labels_partition_and_ignore_column_scale(seed in any::<u64>(), c in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
        let bank = common::random_bank(2, &[9], seed);
        let m = &bank.models[0];
        let labels = &bank.labels[0];
        let (e, col, n) = label_counts(labels);
        prop_assert_eq!(e + col + n, m.hidden());
        let mut scaled = m.clone();
        scaled.w1.column_mut(seed as usize % m.hidden()).scale_mut(c);
        let relabeled = classify_filters(&scaled, EDGE_THRESHOLD, COLOR_THRESHOLD).unwrap();
        let kinds = |l: &[msunique::filterbank::FilterLabel]| l.iter().map(|x| x.kind).collect::<Vec<_>>();
        prop_assert_eq!(kinds(&relabeled), kinds(labels));
    }
}

#[test]
fn training_trace_is_monotone_and_deterministic() {
    let p = patches(2, 200, 5);
    let cfg = TrainingConfig {
        epochs: 40,
        seed: 3,
        ..TrainingConfig::default()
    };
    let a = train_decoder(&p, 6, &cfg).unwrap();
    let b = train_decoder(&p, 6, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert!(a.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(a.final_objective() < a.trace[0]);
}

#[test]
fn normal_samples_have_kurtosis_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x: Vec<f64> = (0..1_000_000)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let k = kurtosis_bias_corrected(&x).unwrap();
    assert!((k - 3.0).abs() < 0.05, "{k}");
}
