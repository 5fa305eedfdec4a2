//! Histogram construction and a registry of histogram distances.
//!
//! Each distance implements [`HistogramDistance`] and is looked up by name.
//! [`DistanceRegistry::standard`] holds the five reported in evaluations:
//! `emd`, `kl`, `js`, `hi`, `l2`.

use crate::error::{Error, Result};

/// Floor applied to empty bins before the KL divergence.
pub const KL_FLOOR: f64 = 1e-10;

/// A distance between two normalized histograms over the same bins.
pub trait HistogramDistance: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn distance(&self, p: &[f64], q: &[f64]) -> f64;
    /// Whether `distance(p, q) == distance(q, p)` for all inputs.
    fn symmetric(&self) -> bool {
        true
    }
}

/// Normalized 1-D earth mover's distance: `Σ|cdf_p − cdf_q| / bins`.
pub struct EarthMovers;

/// `Σ p·ln(p/q)` after flooring empty bins at [`KL_FLOOR`] and renormalizing.
pub struct KullbackLeibler;

/// `½KL(p‖m) + ½KL(q‖m)` with `m = ½(p+q)` and `0·ln 0 = 0`.
pub struct JensenShannon;

/// `1 − Σ min(p, q)`, evaluated as `½Σ|p − q|` (equal for normalized
/// histograms, and exactly zero when `p == q`).
pub struct HistogramIntersection;

/// Euclidean distance between the bin vectors.
pub struct L2;

impl HistogramDistance for EarthMovers {
    fn name(&self) -> &'static str {
        "emd"
    }
    fn description(&self) -> &'static str {
        "earth mover's distance, normalized by bin count"
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
        for (a, b) in p.iter().zip(q) {
            cp += a;
            cq += b;
            total += (cp - cq).abs();
        }
        total / p.len() as f64
    }
}

fn floored(h: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = h.iter().map(|&x| x.max(KL_FLOOR)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

impl HistogramDistance for KullbackLeibler {
    fn name(&self) -> &'static str {
        "kl"
    }
    fn description(&self) -> &'static str {
        "Kullback-Leibler divergence"
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let (p, q) = (floored(p), floored(q));
        p.iter()
            .zip(&q)
            .map(|(a, b)| a * (a / b).ln())
            .sum::<f64>()
            .max(0.0)
    }
    fn symmetric(&self) -> bool {
        false
    }
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

impl HistogramDistance for JensenShannon {
    fn name(&self) -> &'static str {
        "js"
    }
    fn description(&self) -> &'static str {
        "Jensen-Shannon divergence"
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
        (0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m)).clamp(0.0, std::f64::consts::LN_2)
    }
}

impl HistogramDistance for HistogramIntersection {
    fn name(&self) -> &'static str {
        "hi"
    }
    fn description(&self) -> &'static str {
        "one minus histogram intersection"
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

impl HistogramDistance for L2 {
    fn name(&self) -> &'static str {
        "l2"
    }
    fn description(&self) -> &'static str {
        "L2 norm of the bin differences"
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Ordered, name-keyed collection of distances.
#[derive(Default)]
pub struct DistanceRegistry {
    entries: Vec<Box<dyn HistogramDistance>>,
}

impl DistanceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn standard() -> Self {
        let mut r = Self::new();
        r.register(Box::new(EarthMovers));
        r.register(Box::new(KullbackLeibler));
        r.register(Box::new(JensenShannon));
        r.register(Box::new(HistogramIntersection));
        r.register(Box::new(L2));
        r
    }

    /// Adds a distance, replacing any existing one with the same name.
    pub fn register(&mut self, d: Box<dyn HistogramDistance>) {
        match self.entries.iter().position(|e| e.name() == d.name()) {
            Some(i) => self.entries[i] = d,
            None => self.entries.push(d),
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn HistogramDistance> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "histogram distance",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn HistogramDistance> {
        self.entries.iter().map(|b| b.as_ref())
    }

    /// Bins both samples over their joint range and evaluates every distance.
    pub fn compare(&self, a: &[f64], b: &[f64], bins: usize) -> Result<Vec<(&'static str, f64)>> {
        match joint_histograms(a, b, bins)? {
            Some((p, q)) => Ok(self
                .iter()
                .map(|d| (d.name(), d.distance(&p, &q)))
                .collect()),
            None => Ok(self.iter().map(|d| (d.name(), 0.0)).collect()),
        }
    }
}

/// Normalized histograms of `a` and `b` over `bins` equal-width bins spanning
/// the range of `a ∪ b`. Returns `None` when every value is identical.
pub fn joint_histograms(a: &[f64], b: &[f64], bins: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite sample in histogram input".into(),
        ));
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(None);
    }
    let hist = |x: &[f64]| {
        let mut h = vec![0.0; bins];
        for &v in x {
            let i = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
            h[i.min(bins - 1)] += 1.0;
        }
        let n = x.len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    Ok(Some((hist(a), hist(b))))
}

/// The five standard distances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistogramDistances {
    pub emd: f64,
    pub kl: f64,
    pub js: f64,
    pub hi: f64,
    pub l2: f64,
}

impl HistogramDistances {
    pub fn as_pairs(&self) -> [(&'static str, f64); 5] {
        [
            ("emd", self.emd),
            ("kl", self.kl),
            ("js", self.js),
            ("hi", self.hi),
            ("l2", self.l2),
        ]
    }
}

pub fn histogram_distances(a: &[f64], b: &[f64], bins: usize) -> Result<HistogramDistances> {
    let registry = DistanceRegistry::standard();
    let values = registry.compare(a, b, bins)?;
    let get = |name: &str| {
        values
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .unwrap_or(0.0)
    };
    Ok(HistogramDistances {
        emd: get("emd"),
        kl: get("kl"),
        js: get("js"),
        hi: get("hi"),
        l2: get("l2"),
    })
}
