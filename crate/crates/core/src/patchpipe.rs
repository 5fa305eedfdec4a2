//! Patch extraction and ZCA whitening.
//!
//! A patch of side `p` is vectorized into a column of length `3·p²`: the Y
//! plane's `p×p` samples in row-major order, then G, then Cr. This order is
//! also the layout of every filter stored in a model bank.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::colorspace::YgcrImage;
use crate::error::{Error, Result};

/// Eigenvalues of the patch covariance below this are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Patches stored one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    side: usize,
    data: DMatrix<f64>,
}

impl PatchMatrix {
    pub fn new(side: usize, data: DMatrix<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidArgument("patch side must be positive".into()));
        }
        if data.nrows() != 3 * side * side {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for patch side {} (expected {})",
                data.nrows(),
                side,
                3 * side * side
            )));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Concatenates patch matrices column-wise.
    pub fn hstack(parts: &[PatchMatrix]) -> Result<PatchMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no patch matrices to stack".into()))?;
        if parts.iter().any(|p| p.side != first.side) {
            return Err(Error::DimensionMismatch("patch sides differ".into()));
        }
        let total: usize = parts.iter().map(|p| p.count()).sum();
        let mut data = DMatrix::zeros(first.dim(), total);
        let mut col = 0;
        for p in parts {
            data.columns_mut(col, p.count()).copy_from(&p.data);
            col += p.count();
        }
        Ok(PatchMatrix {
            side: first.side,
            data,
        })
    }
}

fn check_size(img: &YgcrImage, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidArgument("patch side must be positive".into()));
    }
    if img.width() < p || img.height() < p {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            side: p,
        });
    }
    Ok(())
}

fn copy_patch(img: &YgcrImage, p: usize, top: usize, left: usize, out: &mut [f64]) {
    let w = img.width();
    let mut k = 0;
    for plane in img.planes() {
        for dy in 0..p {
            let row = (top + dy) * w + left;
            out[k..k + p].copy_from_slice(&plane[row..row + p]);
            k += p;
        }
    }
}

/// Draws `count` patches with top-left corners uniform over all valid positions.
pub fn extract_random_patches<R: Rng + ?Sized>(
    img: &YgcrImage,
    count: usize,
    p: usize,
    rng: &mut R,
) -> Result<PatchMatrix> {
    check_size(img, p)?;
    let mut data = DMatrix::zeros(3 * p * p, count);
    for mut col in data.column_iter_mut() {
        let top = rng.random_range(0..=img.height() - p);
        let left = rng.random_range(0..=img.width() - p);
        copy_patch(img, p, top, left, col.as_mut_slice());
    }
    Ok(PatchMatrix { side: p, data })
}

/// Non-overlapping tiles in raster order over the image cropped to whole tiles.
pub fn extract_tiled_patches(img: &YgcrImage, p: usize) -> Result<PatchMatrix> {
    check_size(img, p)?;
    let (rows, cols) = (img.height() / p, img.width() / p);
    let mut data = DMatrix::zeros(3 * p * p, rows * cols);
    for (i, mut col) in data.column_iter_mut().enumerate() {
        copy_patch(img, p, (i / cols) * p, (i % cols) * p, col.as_mut_slice());
    }
    Ok(PatchMatrix { side: p, data })
}

/// Inverse of [`extract_tiled_patches`]: rebuilds the three cropped planes.
pub fn assemble_tiles(patches: &PatchMatrix, tiles_wide: usize) -> Result<[Vec<f64>; 3]> {
    let p = patches.side;
    if tiles_wide == 0 || !patches.count().is_multiple_of(tiles_wide) {
        return Err(Error::DimensionMismatch(format!(
            "{} tiles cannot be laid out {} wide",
            patches.count(),
            tiles_wide
        )));
    }
    let w = tiles_wide * p;
    let h = (patches.count() / tiles_wide) * p;
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for (i, col) in patches.data.column_iter().enumerate() {
        let (top, left) = ((i / tiles_wide) * p, (i % tiles_wide) * p);
        for (c, plane) in planes.iter_mut().enumerate() {
            for dy in 0..p {
                let src = c * p * p + dy * p;
                let dst = (top + dy) * w + left;
                for dx in 0..p {
                    plane[dst + dx] = col[src + dx];
                }
            }
        }
    }
    Ok(planes)
}

/// A frozen ZCA whitening transform `x ↦ zca·(x − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    mean: DVector<f64>,
    zca: DMatrix<f64>,
    epsilon: f64,
}

impl WhiteningTransform {
    /// Reassembles a transform from stored parts.
    pub fn from_parts(mean: DVector<f64>, zca: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        if zca.nrows() != mean.len() || zca.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "zca {}x{} with mean of length {}",
                zca.nrows(),
                zca.ncols(),
                mean.len()
            )));
        }
        Ok(Self { mean, zca, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn zca(&self) -> &DMatrix<f64> {
        &self.zca
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Per-feature mean and population covariance (normalized by the column count).
pub fn mean_and_covariance(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = data.ncols() as f64;
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = DMatrix::zeros(data.nrows(), data.nrows());
    cov.gemm(1.0 / n, &centered, &centered.transpose(), 0.0);
    (mean, cov)
}

/// Fits ZCA whitening: `zca = U·(Λ + εI)^(-1/2)·Uᵀ` from the covariance eigendecomposition.
pub fn fit_whitening(patches: &PatchMatrix, epsilon: f64) -> Result<WhiteningTransform> {
    if patches.count() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: patches.count(),
        });
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must be non-negative"
        )));
    }
    let (mean, cov) = mean_and_covariance(&patches.data);
    let eig = SymmetricEigen::new(cov);
    let mut scale = DVector::zeros(eig.eigenvalues.len());
    for (s, &lambda) in scale.iter_mut().zip(eig.eigenvalues.iter()) {
        let lambda = if lambda < EIGEN_FLOOR { 0.0 } else { lambda };
        let denom = lambda + epsilon;
        if denom <= 0.0 {
            return Err(Error::RankDeficient);
        }
        *s = denom.sqrt().recip();
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(scale.iter()) {
        col *= *s;
    }
    let mut zca = DMatrix::zeros(u.nrows(), u.nrows());
    zca.gemm(1.0, &scaled, &u.transpose(), 0.0);
    // Exact symmetry; the product is symmetric only up to rounding.
    let zca = (&zca + zca.transpose()) * 0.5;
    Ok(WhiteningTransform { mean, zca, epsilon })
}

pub fn apply_whitening(w: &WhiteningTransform, patches: &PatchMatrix) -> Result<PatchMatrix> {
    if patches.dim() != w.dim() {
        return Err(Error::DimensionMismatch(format!(
            "patch dimension {} vs whitening dimension {}",
            patches.dim(),
            w.dim()
        )));
    }
    let mut centered = patches.data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &w.mean;
    }
    Ok(PatchMatrix {
        side: patches.side,
        data: &w.zca * centered,
    })
}
