//! YGCr construction: BT.601 luma, the raw green channel and BT.601 Cr.

use crate::error::{Error, Result};
use crate::imageio::RgbImage;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct YgcrImage {
    width: usize,
    height: usize,
    y: Vec<f64>,
    g: Vec<f64>,
    cr: Vec<f64>,
}

impl YgcrImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn cr(&self) -> &[f64] {
        &self.cr
    }

    /// Planes in patch vectorization order: Y, G, Cr.
    pub fn planes(&self) -> [&[f64]; 3] {
        [&self.y, &self.g, &self.cr]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    R,
    G,
    B,
}

fn ygcr_pixel(r: f64, g: f64, b: f64) -> [f64; 3] {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cr = 0.5 + (0.5 * r - 0.418688 * g - 0.081312 * b);
    [y.clamp(0.0, 1.0), g, cr.clamp(0.0, 1.0)]
}

pub fn to_ygcr(img: &RgbImage) -> YgcrImage {
    let n = img.r().len();
    let (mut y, mut g, mut cr) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for i in 0..n {
        let [py, pg, pcr] = ygcr_pixel(img.r()[i], img.g()[i], img.b()[i]);
        y.push(py);
        g.push(pg);
        cr.push(pcr);
    }
    YgcrImage {
        width: img.width(),
        height: img.height(),
        y,
        g,
        cr,
    }
}

/// Pearson correlation between two RGB planes over all pixels.
pub fn channel_cross_correlation(img: &RgbImage, a: Channel, b: Channel) -> Result<f64> {
    let plane = |c| match c {
        Channel::R => img.r(),
        Channel::G => img.g(),
        Channel::B => img.b(),
    };
    if img.r().len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: img.r().len(),
        });
    }
    stats::pearson(plane(a), plane(b))
}
