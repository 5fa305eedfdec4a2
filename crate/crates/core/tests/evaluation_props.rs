mod common;

use msunique::evaluation::{evaluate, fit_logistic, outlier_ratio, srocc};
use msunique::histogram::{histogram_distances, DistanceRegistry, HistogramDistances};
use proptest::prelude::*;

use common::entry;

fn linear_sse(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    x.iter()
        .zip(y)
        .map(|(a, b)| (slope * a + icpt - b).powi(2))
        .sum()
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn self_distances_are_zero(a in samples(), bins in 1usize..30) {
        prop_assert_eq!(histogram_distances(&a, &a, bins).unwrap(), HistogramDistances::default());
    }

    #[test]
    fn symmetric_distances_commute(a in samples(), b in samples(), bins in 1usize..30) {
        let r = DistanceRegistry::standard();
        let ab = r.compare(&a, &b, bins).unwrap();
        let ba = r.compare(&b, &a, bins).unwrap();
        for ((name, x), (_, y)) in ab.iter().zip(&ba) {
            prop_assert!(*x >= 0.0);
            if r.get(name).unwrap().symmetric() {
                prop_assert!((x - y).abs() < 1e-12, "{name}: {x} vs {y}");
            }
        }
        let js = ab.iter().find(|(n, _)| *n == "js").unwrap().1;
        prop_assert!(js <= std::f64::consts::LN_2);
    }

    #[test]
    fn srocc_ignores_increasing_transforms(x in prop::collection::vec(-20.0..20.0f64, 3..40)) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + i as f64 * 0.1).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let base = srocc(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| v.atan()).collect();
        let ty: Vec<f64> = y.iter().map(|v| 3.0 * v + 10.0).collect();
        prop_assert_eq!(srocc(&tx, &ty).unwrap(), base);
    }

    #[test]
    fn outlier_ratio_matches_count(rows in prop::collection::vec((0.0..100.0f64, 0.0..10.0f64, -30.0..30.0f64), 1..20)) {
        let entries: Vec<_> = rows.iter().map(|&(s, sd, _)| entry("x", s, Some(sd))).collect();
        let regressed: Vec<f64> = rows.iter().map(|&(s, _, off)| s + off).collect();
        let expected = rows.iter().filter(|&&(_, sd, off)| off.abs() > 2.0 * sd).count() as f64 / rows.len() as f64;
        let got = outlier_ratio(&regressed, &entries).unwrap();
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert!((got - expected).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn logistic_fit_is_no_worse_than_a_line(obj in prop::collection::vec(0.0..1.0f64, 6..30), slope in -50.0..50.0f64, wiggle in 0.0..20.0f64) {
        prop_assume!(obj.iter().any(|v| (v - obj[0]).abs() > 1e-3));
        let subj: Vec<f64> = obj.iter().enumerate()
            .map(|(i, v)| slope * v + wiggle * ((i * 7919) % 13) as f64 / 13.0)
            .collect();
        let fit = fit_logistic(&obj, &subj).unwrap();
        let line = linear_sse(&obj, &subj);
        prop_assert!(fit.residual_sse <= line * (1.0 + 1e-9) + 1e-12, "{} > {line}", fit.residual_sse);
    }
}

#[test]
fn missing_std_omits_outlier_ratio() {
    let entries: Vec<_> = (0..8)
        .map(|i| entry("x", i as f64 * 3.0, if i == 4 { None } else { Some(1.0) }))
        .collect();
    let obj: Vec<f64> = (0..8).map(|i| (i as f64 * 0.4).tanh()).collect();
    let r = evaluate(&obj, &entries, 10).unwrap();
    assert!(r.outlier_ratio.is_none());
    assert!(r.to_key_value().contains("outlier_ratio=NA"));
    assert!((r.srocc - 1.0).abs() < 1e-12);
}
