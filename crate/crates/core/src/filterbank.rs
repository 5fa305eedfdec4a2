//! The trained multi-width decoder bank: training, sharpness labels,
//! persistence and filter visualization.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::decoder::{train_decoder, DecoderModel, LossScale, TrainingConfig};
use crate::error::{Error, Result};
use crate::imageio::{save_ppm, RgbImage};
use crate::patchpipe::{apply_whitening, fit_whitening, PatchMatrix, WhiteningTransform};

pub const DEFAULT_SIZES: [usize; 5] = [81, 121, 169, 400, 625];
pub const EDGE_THRESHOLD: f64 = 5.0;
pub const COLOR_THRESHOLD: f64 = 2.0;
pub const DEFAULT_SUPPRESSION_TAU: f64 = 0.025;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Color,
    Neutral,
    Edge,
}

impl FilterKind {
    /// Response multiplier used when building feature vectors.
    pub fn weight(self) -> f64 {
        match self {
            FilterKind::Edge => 2.0,
            FilterKind::Neutral => 1.0,
            FilterKind::Color => 0.5,
        }
    }

    fn code(self) -> u8 {
        match self {
            FilterKind::Color => 0,
            FilterKind::Neutral => 1,
            FilterKind::Edge => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FilterKind::Color),
            1 => Some(FilterKind::Neutral),
            2 => Some(FilterKind::Edge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterLabel {
    pub kind: FilterKind,
    pub kurtosis: f64,
}

impl FilterLabel {
    pub fn from_kurtosis(kurtosis: f64, edge_threshold: f64, color_threshold: f64) -> Self {
        let kind = if kurtosis > edge_threshold {
            FilterKind::Edge
        } else if kurtosis < color_threshold {
            FilterKind::Color
        } else {
            FilterKind::Neutral
        };
        Self { kind, kurtosis }
    }

    pub fn weight(&self) -> f64 {
        self.kind.weight()
    }
}

/// Bias-corrected sample kurtosis (non-excess; a normal sample gives ≈ 3).
///
/// With central moments `m_q = (1/n)·Σ(x − x̄)^q` and `k = m4/m2²`:
/// `((n+1)·k − 3(n−1))·(n−1)/((n−2)(n−3)) + 3`.
pub fn kurtosis_bias_corrected(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let k = m4 / (m2 * m2);
    Ok(((nf + 1.0) * k - 3.0 * (nf - 1.0)) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) + 3.0)
}

/// Labels every forward filter (column of `w1`) by the kurtosis of its
/// zero-centered, unit-L2-norm values. Constant filters are Neutral with
/// kurtosis recorded as 0.
pub fn classify_filters(
    m: &DecoderModel,
    edge_threshold: f64,
    color_threshold: f64,
) -> Result<Vec<FilterLabel>> {
    m.w1.column_iter()
        .map(|col| {
            let mean = col.mean();
            let mut v: Vec<f64> = col.iter().map(|x| x - mean).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(FilterLabel {
                    kind: FilterKind::Neutral,
                    kurtosis: 0.0,
                });
            }
            v.iter_mut().for_each(|x| *x /= norm);
            match kurtosis_bias_corrected(&v) {
                Ok(k) => Ok(FilterLabel::from_kurtosis(
                    k,
                    edge_threshold,
                    color_threshold,
                )),
                Err(Error::ZeroVariance) => Ok(FilterLabel {
                    kind: FilterKind::Neutral,
                    kurtosis: 0.0,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub patch_side: usize,
    pub whitening: WhiteningTransform,
    /// Ordered by ascending hidden width.
    pub models: Vec<DecoderModel>,
    /// One label per hidden unit of the corresponding model.
    pub labels: Vec<Vec<FilterLabel>>,
    pub config: TrainingConfig,
    pub suppression_tau: f64,
}

/// Per-model training outcome.
#[derive(Debug, Clone)]
pub struct ModelSummary {
    pub hidden: usize,
    pub trace: Vec<f64>,
    pub edge: usize,
    pub color: usize,
    pub neutral: usize,
}

impl ModelSummary {
    pub fn initial_objective(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        self.trace[self.trace.len() - 1]
    }
}

pub fn label_counts(labels: &[FilterLabel]) -> (usize, usize, usize) {
    labels.iter().fold((0, 0, 0), |(e, c, n), l| match l.kind {
        FilterKind::Edge => (e + 1, c, n),
        FilterKind::Color => (e, c + 1, n),
        FilterKind::Neutral => (e, c, n + 1),
    })
}

/// Fits whitening on `patches`, trains one decoder per width on the whitened
/// data (seed offset by the model's position in ascending-width order) and
/// labels every filter.
pub fn train_bank(
    patches: &PatchMatrix,
    sizes: &[usize],
    cfg: &TrainingConfig,
    epsilon: f64,
    suppression_tau: f64,
) -> Result<(FilterBank, Vec<ModelSummary>)> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one decoder width is required".into(),
        ));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "decoder widths {sizes:?} are not distinct"
        )));
    }
    if sorted[0] == 0 {
        return Err(Error::InvalidArgument(
            "decoder widths must be positive".into(),
        ));
    }
    if !(suppression_tau >= 0.0 && suppression_tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tau {suppression_tau} must be non-negative"
        )));
    }
    cfg.validate()?;
    let whitening = fit_whitening(patches, epsilon)?;
    let white = apply_whitening(&whitening, patches)?;

    let trained = sorted
        .par_iter()
        .enumerate()
        .map(|(i, &h)| {
            let model_cfg = TrainingConfig {
                seed: cfg.seed.wrapping_add(i as i64),
                ..*cfg
            };
            let t = train_decoder(&white, h, &model_cfg)?;
            let labels = classify_filters(&t.model, EDGE_THRESHOLD, COLOR_THRESHOLD)?;
            Ok((t, labels))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models = Vec::with_capacity(trained.len());
    let mut labels = Vec::with_capacity(trained.len());
    let mut summaries = Vec::with_capacity(trained.len());
    for (t, l) in trained {
        let (edge, color, neutral) = label_counts(&l);
        summaries.push(ModelSummary {
            hidden: t.model.hidden(),
            trace: t.trace,
            edge,
            color,
            neutral,
        });
        models.push(t.model);
        labels.push(l);
    }
    let bank = FilterBank {
        patch_side: patches.side(),
        whitening,
        models,
        labels,
        config: *cfg,
        suppression_tau,
    };
    Ok((bank, summaries))
}

impl FilterBank {
    pub fn input_dim(&self) -> usize {
        3 * self.patch_side * self.patch_side
    }

    /// Total number of filters across all models.
    pub fn filter_count(&self) -> usize {
        self.models.iter().map(|m| m.hidden()).sum()
    }

    /// Response weights of all filters in model order.
    pub fn filter_weights(&self) -> Vec<f64> {
        self.labels.iter().flatten().map(|l| l.weight()).collect()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        if self.whitening.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "whitening dimension {} for patch side {}",
                self.whitening.dim(),
                self.patch_side
            )));
        }
        if self.models.len() != self.labels.len() {
            return Err(Error::DimensionMismatch(
                "one label set per model required".into(),
            ));
        }
        for (m, l) in self.models.iter().zip(&self.labels) {
            if m.input_dim() != d || l.len() != m.hidden() {
                return Err(Error::DimensionMismatch(format!(
                    "model h={} with input {} and {} labels",
                    m.hidden(),
                    m.input_dim(),
                    l.len()
                )));
            }
        }
        if self
            .models
            .windows(2)
            .any(|w| w[0].hidden() >= w[1].hidden())
        {
            return Err(Error::InvalidArgument(
                "model widths must be distinct and ascending".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Persistence

pub const BANK_MAGIC: &[u8; 4] = b"MSUB";
pub const BANK_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    /// Row-major dump of a matrix.
    fn matrix(&mut self, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let v = self.f64s(rows.checked_mul(cols).ok_or(Error::Truncated)?)?;
        Ok(DMatrix::from_row_slice(rows, cols, &v))
    }
}

/// Serializes a bank into the versioned little-endian container.
pub fn encode_bank(bank: &FilterBank) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(BANK_MAGIC);
    w.u32(BANK_VERSION as usize);
    w.u32(bank.patch_side);
    w.f64(bank.whitening.epsilon());
    w.f64(bank.config.rho);
    w.f64(bank.config.beta);
    w.f64(bank.config.lambda);
    w.u32(bank.config.epochs);
    w.i64(bank.config.seed);
    w.f64(bank.suppression_tau);
    w.u32(bank.models.len());

    w.u32(bank.whitening.dim());
    for &v in bank.whitening.mean().iter() {
        w.f64(v);
    }
    w.matrix(bank.whitening.zca());

    for (m, labels) in bank.models.iter().zip(&bank.labels) {
        w.u32(m.hidden());
        w.matrix(&m.w1);
        for &v in m.b1.iter() {
            w.f64(v);
        }
        w.matrix(&m.w2);
        for &v in m.b2.iter() {
            w.f64(v);
        }
        for l in labels {
            w.u8(l.kind.code());
        }
        for l in labels {
            w.f64(l.kurtosis);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

/// Parses a bank container. The loss scale is not part of the format and is
/// reported as the default.
pub fn decode_bank(bytes: &[u8]) -> Result<FilterBank> {
    if bytes.len() < 4 {
        return Err(if BANK_MAGIC.starts_with(bytes) {
            Error::Truncated
        } else {
            Error::NotAModelBank
        });
    }
    if &bytes[..4] != BANK_MAGIC {
        return Err(Error::NotAModelBank);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != BANK_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: BANK_VERSION,
        });
    }
    let patch_side = r.u32()? as usize;
    let epsilon = r.f64()?;
    let rho = r.f64()?;
    let beta = r.f64()?;
    let lambda = r.f64()?;
    let epochs = r.u32()? as usize;
    let seed = r.i64()?;
    let suppression_tau = r.f64()?;
    let model_count = r.u32()? as usize;

    let dim = r.u32()? as usize;
    let mean = DVector::from_vec(r.f64s(dim)?);
    let zca = r.matrix(dim, dim)?;

    let mut models = Vec::new();
    let mut raw_labels = Vec::new();
    for _ in 0..model_count {
        let h = r.u32()? as usize;
        let w1 = r.matrix(dim, h)?;
        let b1 = DVector::from_vec(r.f64s(h)?);
        let w2 = r.matrix(h, dim)?;
        let b2 = DVector::from_vec(r.f64s(dim)?);
        let codes = r.take(h)?.to_vec();
        let kurtoses = r.f64s(h)?;
        models.push(DecoderModel { w1, b1, w2, b2 });
        raw_labels.push((codes, kurtoses));
    }
    let payload_end = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..payload_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(Error::TrailingBytes(bytes.len() - r.pos));
    }
    let labels = raw_labels
        .into_iter()
        .map(|(codes, kurtoses)| {
            codes
                .into_iter()
                .zip(kurtoses)
                .map(|(code, kurtosis)| {
                    let kind = FilterKind::from_code(code).ok_or(Error::NotAModelBank)?;
                    Ok(FilterLabel { kind, kurtosis })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let bank = FilterBank {
        patch_side,
        whitening: WhiteningTransform::from_parts(mean, zca, epsilon)?,
        models,
        labels,
        config: TrainingConfig {
            rho,
            beta,
            lambda,
            epochs,
            seed,
            loss_scale: LossScale::default(),
        },
        suppression_tau,
    };
    bank.validate()?;
    Ok(bank)
}

pub fn save_bank(bank: &FilterBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_bank(bank)).map_err(|e| Error::io(path, e))
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<FilterBank> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bank(&bytes)
}

// ---------------------------------------------------------------------------
// Visualization

/// Which filters to include in a mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KindSelection {
    #[default]
    All,
    Edge,
    Color,
}

impl std::str::FromStr for KindSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(KindSelection::All),
            "edge" => Ok(KindSelection::Edge),
            "color" => Ok(KindSelection::Color),
            other => Err(Error::UnknownStrategy {
                kind: "filter kind",
                name: other.to_string(),
            }),
        }
    }
}

impl KindSelection {
    fn admits(self, kind: FilterKind) -> bool {
        match self {
            KindSelection::All => true,
            KindSelection::Edge => kind == FilterKind::Edge,
            KindSelection::Color => kind == FilterKind::Color,
        }
    }
}

/// Lays the selected filters of one model out as a grid of `p×p` tiles,
/// `⌈√count⌉` per row, filters in column order. Each tile is min-max
/// normalized on its own; the Y, G and Cr planes are shown as the red, green
/// and blue channels. Returns `None` when no filter is selected.
pub fn filter_mosaic(
    bank: &FilterBank,
    model_index: usize,
    kind: KindSelection,
) -> Result<Option<(RgbImage, usize)>> {
    let model = bank.models.get(model_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "model index {model_index} out of range ({} models)",
            bank.models.len()
        ))
    })?;
    let labels = &bank.labels[model_index];
    let selected: Vec<usize> = (0..model.hidden())
        .filter(|&j| kind.admits(labels[j].kind))
        .collect();
    if selected.is_empty() {
        return Ok(None);
    }
    let p = bank.patch_side;
    let per_row = (selected.len() as f64).sqrt().ceil() as usize;
    let rows = selected.len().div_ceil(per_row);
    let (w, h) = (per_row * p, rows * p);
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for (t, &j) in selected.iter().enumerate() {
        let col = model.w1.column(j);
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let norm = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let (top, left) = ((t / per_row) * p, (t % per_row) * p);
        for (c, plane) in planes.iter_mut().enumerate() {
            for dy in 0..p {
                for dx in 0..p {
                    plane[(top + dy) * w + left + dx] = norm(col[c * p * p + dy * p + dx]);
                }
            }
        }
    }
    let [r, g, b] = planes;
    Ok(Some((
        RgbImage::from_planes(w, h, r, g, b)?,
        selected.len(),
    )))
}

/// Writes the mosaic of one model to `path`; returns the number of tiles
/// written (0 means nothing matched and no file was created).
pub fn export_filter_mosaic(
    bank: &FilterBank,
    model_index: usize,
    kind: KindSelection,
    path: impl AsRef<Path>,
) -> Result<usize> {
    match filter_mosaic(bank, model_index, kind)? {
        Some((img, tiles)) => {
            save_ppm(&img, path)?;
            Ok(tiles)
        }
        None => Ok(0),
    }
}
