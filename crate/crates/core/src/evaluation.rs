//! Agreement between objective scores and subjective ratings.
//!
//! Objective scores are first mapped onto the subjective scale with the
//! five-parameter logistic
//!
//! ```text
//! Q(x) = β1·(½ − 1/(1 + exp(β2·(x − β3)))) + β4·x + β5
//! ```
//!
//! fitted by Nelder–Mead least squares. Correlations, RMSE, outlier ratio and
//! histogram distances are computed on the regressed scores.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::decoder::sigmoid;
use crate::error::{Error, Result};
use crate::histogram::{histogram_distances, HistogramDistances};
use crate::imageio::SubjectiveEntry;
use crate::scoring::spearman;
use crate::stats;

pub const MIN_REGRESSION_POINTS: usize = 5;
pub const SIMPLEX_MAX_ITER: usize = 5_000;
pub const SIMPLEX_TOL: f64 = 1e-10;
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub params: [f64; 5],
    pub regressed: Vec<f64>,
    pub residual_sse: f64,
}

pub fn logistic5(params: &[f64; 5], x: f64) -> f64 {
    let [b1, b2, b3, b4, b5] = *params;
    // ½ − 1/(1+e^t) = ½ − σ(−t)
    b1 * (0.5 - sigmoid(-b2 * (x - b3))) + b4 * x + b5
}

fn sse(params: &[f64; 5], x: &[f64], y: &[f64]) -> f64 {
    let s: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = logistic5(params, xi) - yi;
            r * r
        })
        .sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Ordinary least-squares line `y ≈ a·x + b`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (stats::mean(x), stats::mean(y));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Minimizes `f` over R⁵ with the Nelder–Mead simplex.
fn nelder_mead(
    f: impl Fn(&[f64; 5]) -> f64,
    start: [f64; 5],
    max_iter: usize,
    tol: f64,
) -> ([f64; 5], f64) {
    const N: usize = 5;
    let mut simplex: Vec<([f64; 5], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] = if p[i] != 0.0 { p[i] * 1.05 } else { 0.00025 };
        simplex.push((p, f(&p)));
    }
    let centroid = |s: &[([f64; 5], f64)]| {
        let mut c = [0.0; N];
        for (p, _) in &s[..N] {
            for k in 0..N {
                c[k] += p[k] / N as f64;
            }
        }
        c
    };
    let along = |c: &[f64; 5], p: &[f64; 5], t: f64| {
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = c[k] + t * (p[k] - c[k]);
        }
        out
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[N].1);
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            break;
        }
        let c = centroid(&simplex);
        let refl = along(&c, &simplex[N].0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = along(&c, &simplex[N].0, -2.0);
            let fe = f(&exp);
            simplex[N] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (refl, fr);
        } else {
            let (contracted, fc) = if fr < simplex[N].1 {
                let p = along(&c, &refl, 0.5);
                (p, f(&p))
            } else {
                let p = along(&c, &simplex[N].0, 0.5);
                (p, f(&p))
            };
            if fc < fr.min(simplex[N].1) {
                simplex[N] = (contracted, fc);
            } else {
                let b = simplex[0].0;
                for (p, fp) in simplex.iter_mut().skip(1) {
                    *p = along(&b, p, 0.5);
                    *fp = f(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Fits the five-parameter logistic by least squares.
///
/// Two simplex runs are made: one from the conventional start
/// (β1 = range(y), β2 = 1/std(x), β3 = mean(x), β4 = 0, β5 = mean(y)) and one
/// from the least-squares line (β1 = 0). The better result is kept, so the
/// fit is never worse than the best straight line.
pub fn fit_logistic(objective: &[f64], subjective: &[f64]) -> Result<RegressionFit> {
    if objective.len() != subjective.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} objective vs {} subjective scores",
            objective.len(),
            subjective.len()
        )));
    }
    if objective.len() < MIN_REGRESSION_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_REGRESSION_POINTS,
            got: objective.len(),
        });
    }
    if objective.iter().chain(subjective).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let sd = stats::std_dev(objective);
    if sd == 0.0 {
        return Err(Error::ConstantObjective);
    }
    let (ymin, ymax) = subjective
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mx = stats::mean(objective);
    let conventional = [ymax - ymin, 1.0 / sd, mx, 0.0, stats::mean(subjective)];
    let (slope, intercept) = linear_fit(objective, subjective);
    let linear = [0.0, 1.0 / sd, mx, slope, intercept];

    let cost = |p: &[f64; 5]| sse(p, objective, subjective);
    let mut best = (linear, cost(&linear));
    for start in [conventional, linear] {
        let first = nelder_mead(cost, start, SIMPLEX_MAX_ITER, SIMPLEX_TOL);
        // one restart from the result re-expands a collapsed simplex
        let second = nelder_mead(cost, first.0, SIMPLEX_MAX_ITER, SIMPLEX_TOL);
        let candidate = if second.1 < first.1 { second } else { first };
        if candidate.1 < best.1 {
            best = candidate;
        }
    }
    let params = best.0;
    Ok(RegressionFit {
        params,
        regressed: objective.iter().map(|&x| logistic5(&params, x)).collect(),
        residual_sse: best.1,
    })
}

pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    stats::pearson(a, b)
}

pub fn srocc(a: &[f64], b: &[f64]) -> Result<f64> {
    spearman(a, b)
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    stats::rmse(a, b)
}

/// Fraction of predictions farther than two subjective standard deviations
/// from the subjective score.
pub fn outlier_ratio(regressed: &[f64], entries: &[SubjectiveEntry]) -> Result<f64> {
    if regressed.len() != entries.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} entries",
            regressed.len(),
            entries.len()
        )));
    }
    if entries.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut outliers = 0usize;
    for (i, (r, e)) in regressed.iter().zip(entries).enumerate() {
        let std = e
            .score_std
            .ok_or(Error::OutlierRatioUnavailable { index: i })?;
        if (r - e.subjective_score).abs() > 2.0 * std {
            outliers += 1;
        }
    }
    Ok(outliers as f64 / entries.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub n: usize,
    pub pcc: f64,
    pub srocc: f64,
    pub rmse: f64,
    pub outlier_ratio: Option<f64>,
    pub hist_distances: HistogramDistances,
    pub bins: usize,
    pub fit: RegressionFit,
}

impl EvaluationReport {
    fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("n".to_string(), self.n.to_string()),
            ("pcc".into(), crate::format_sig17(self.pcc)),
            ("srocc".into(), crate::format_sig17(self.srocc)),
            ("rmse".into(), crate::format_sig17(self.rmse)),
            (
                "outlier_ratio".into(),
                self.outlier_ratio
                    .map(crate::format_sig17)
                    .unwrap_or_else(|| "NA".into()),
            ),
        ];
        for (name, v) in self.hist_distances.as_pairs() {
            rows.push((name.to_string(), crate::format_sig17(v)));
        }
        rows.push(("bins".into(), self.bins.to_string()));
        for (i, b) in self.fit.params.iter().enumerate() {
            rows.push((format!("beta{}", i + 1), crate::format_sig17(*b)));
        }
        rows
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        self.rows()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Two-line CSV: header then values.
    pub fn to_csv(&self) -> String {
        let rows = self.rows();
        let header: Vec<&str> = rows.iter().map(|(k, _)| k.as_str()).collect();
        let values: Vec<&str> = rows.iter().map(|(_, v)| v.as_str()).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }
}

/// Full protocol on aligned objective scores and manifest entries.
pub fn evaluate(
    objective: &[f64],
    entries: &[SubjectiveEntry],
    bins: usize,
) -> Result<EvaluationReport> {
    if objective.len() != entries.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} manifest entries",
            objective.len(),
            entries.len()
        )));
    }
    let subjective: Vec<f64> = entries.iter().map(|e| e.subjective_score).collect();
    let fit = fit_logistic(objective, &subjective)?;
    let outlier = if entries.iter().all(|e| e.score_std.is_some()) {
        Some(outlier_ratio(&fit.regressed, entries)?)
    } else {
        None
    };
    Ok(EvaluationReport {
        n: entries.len(),
        pcc: pcc(&fit.regressed, &subjective)?,
        srocc: srocc(&fit.regressed, &subjective)?,
        rmse: rmse(&fit.regressed, &subjective)?,
        outlier_ratio: outlier,
        hist_distances: histogram_distances(&fit.regressed, &subjective, bins)?,
        bins,
        fit,
    })
}

/// Writes `objective,regressed,subjective` rows for external plotting.
pub fn export_scatter(
    objective: &[f64],
    regressed: &[f64],
    subjective: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if objective.len() != regressed.len() || regressed.len() != subjective.len() {
        return Err(Error::DimensionMismatch(
            "scatter columns differ in length".into(),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "objective,regressed,subjective").map_err(io)?;
    for i in 0..objective.len() {
        writeln!(
            w,
            "{},{},{}",
            crate::format_sig17(objective[i]),
            crate::format_sig17(regressed[i]),
            crate::format_sig17(subjective[i])
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn entry(score: f64, std: Option<f64>) -> SubjectiveEntry {
        SubjectiveEntry {
            distorted_key: "d".into(),
            reference_key: "r".into(),
            distorted_path: PathBuf::from("d"),
            reference_path: PathBuf::from("r"),
            subjective_score: score,
            score_std: std,
        }
    }

    #[test]
    fn too_few_and_constant() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            fit_logistic(&x, &x),
            Err(Error::TooFewPoints { needed: 5, got: 4 })
        ));
        assert!(matches!(
            fit_logistic(&[2.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            Err(Error::ConstantObjective)
        ));
    }

    #[test]
    fn exact_affine_relation_is_recovered() {
        let subj: Vec<f64> = (0..20)
            .map(|i| 10.0 + 3.7 * i as f64 - 0.05 * (i * i) as f64)
            .collect();
        let obj: Vec<f64> = subj.iter().map(|s| 2.0 * s + 3.0).collect();
        let fit = fit_logistic(&obj, &subj).unwrap();
        assert!(rmse(&fit.regressed, &subj).unwrap() < 1e-6);
    }

    #[test]
    fn identity_fit_is_no_worse_than_line() {
        let s = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let fit = fit_logistic(&s, &s).unwrap();
        assert!(fit.residual_sse <= 1e-20);
    }

    #[test]
    fn logistic_is_overflow_safe() {
        let p = [2.0, 1e6, 0.0, 0.0, 1.0];
        assert_eq!(logistic5(&p, 10.0), 1.0 + 2.0 * 0.5);
        assert_eq!(logistic5(&p, -10.0), 1.0 - 2.0 * 0.5);
    }

    #[test]
    fn outliers() {
        let entries: Vec<_> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&s| entry(s, Some(0.5)))
            .collect();
        assert_eq!(outlier_ratio(&[1.0, 2.0, 3.0, 4.0], &entries).unwrap(), 0.0);
        assert_eq!(
            outlier_ratio(&[1.0, 2.0 + 1.5, 3.0, 4.0], &entries).unwrap(),
            0.25
        );
        let mut missing = entries.clone();
        missing[2].score_std = None;
        assert!(matches!(
            outlier_ratio(&[1.0, 2.0, 3.0, 4.0], &missing),
            Err(Error::OutlierRatioUnavailable { index: 2 })
        ));
    }

    #[test]
    fn report_formats() {
        let entries: Vec<_> = (0..8).map(|i| entry(i as f64, None)).collect();
        let obj: Vec<f64> = (0..8).map(|i| 0.5 * i as f64 + 1.0).collect();
        let r = evaluate(&obj, &entries, 10).unwrap();
        assert!(r.outlier_ratio.is_none());
        let kv = r.to_key_value();
        assert!(kv.contains("outlier_ratio=NA"));
        assert!(kv.lines().any(|l| l.starts_with("pcc=")));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().next().unwrap().split(',').count(),
            csv.lines().nth(1).unwrap().split(',').count()
        );
    }
}
