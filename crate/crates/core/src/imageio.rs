//! Raster input and subjective-score manifests.
//!
//! Only the Netpbm color formats are decoded: binary `P6` and ASCII `P3`,
//! with maxval up to 255. Grayscale Netpbm files are rejected because every
//! downstream stage is defined on three channels.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// An RGB image with planes stored row-major, samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    r: Vec<f64>,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl RgbImage {
    /// Builds an image from three row-major planes.
    pub fn from_planes(
        width: usize,
        height: usize,
        r: Vec<f64>,
        g: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image has zero area".into()));
        }
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "planes of length {}/{}/{} for a {}x{} image",
                r.len(),
                g.len(),
                b.len(),
                width,
                height
            )));
        }
        if let Some(v) = r
            .iter()
            .chain(&g)
            .chain(&b)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidArgument(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            r,
            g,
            b,
        })
    }

    /// Builds an image by evaluating `f(x, y) -> [r, g, b]` at every pixel.
    /// Samples are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let n = width * height;
        let (mut r, mut g, mut b) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for y in 0..height {
            for x in 0..width {
                let [pr, pg, pb] = f(x, y);
                r.push(pr.clamp(0.0, 1.0));
                g.push(pg.clamp(0.0, 1.0));
                b.push(pb.clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            r,
            g,
            b,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.r[i], self.g[i], self.b[i]]
    }

    pub fn same_dimensions(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// One row of a subjective-score manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectiveEntry {
    /// The distorted path exactly as written in the manifest.
    pub distorted_key: String,
    /// The reference path exactly as written in the manifest.
    pub reference_key: String,
    /// Distorted image path, resolved against the manifest directory.
    pub distorted_path: PathBuf,
    /// Reference image path, resolved against the manifest directory.
    pub reference_path: PathBuf,
    pub subjective_score: f64,
    pub score_std: Option<f64>,
}

pub const MANIFEST_HEADER: [&str; 4] = ["dist_path", "ref_path", "score", "std"];

/// Loads a PPM image (`P6` or `P3`).
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

/// Decodes PPM bytes. Samples are divided by maxval, so maxval 255 maps the
/// top code to exactly 1.0.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    let binary = match magic {
        b"P6" => true,
        b"P3" => false,
        b"P5" | b"P2" | b"P4" | b"P1" => {
            return Err(Error::UnsupportedFormat(
                "grayscale/bitmap Netpbm input is not accepted; provide RGB".into(),
            ))
        }
        _ => return Err(Error::MalformedImage("missing P6/P3 magic".into())),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage("zero width or height".into()));
    }
    if maxval == 0 {
        return Err(Error::MalformedImage("maxval is 0".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedBitDepth(maxval as u32));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedImage("dimensions overflow".into()))?;
    let scale = maxval as f64;
    let mut r = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut push = |i: usize, v: usize| -> Result<()> {
        if v > maxval {
            return Err(Error::MalformedImage(format!(
                "sample {v} exceeds maxval {maxval}"
            )));
        }
        let s = v as f64 / scale;
        match i % 3 {
            0 => r.push(s),
            1 => g.push(s),
            _ => b.push(s),
        }
        Ok(())
    };
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = cursor.pos + 1;
        let data = bytes
            .get(start..)
            .filter(|d| d.len() >= 3 * n)
            .ok_or_else(|| Error::MalformedImage("truncated pixel data".into()))?;
        for (i, &v) in data[..3 * n].iter().enumerate() {
            push(i, v as usize)?;
        }
    } else {
        for i in 0..3 * n {
            let v = cursor
                .number()
                .map_err(|_| Error::MalformedImage("truncated pixel data".into()))?;
            push(i, v)?;
        }
    }
    Ok(RgbImage {
        width,
        height,
        r,
        g,
        b,
    })
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while let Some(&c) = self.bytes.get(self.pos) {
            if c.is_ascii_whitespace() || c == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedImage("unexpected end of header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::MalformedImage(format!(
                    "expected a number, found `{}`",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an image as binary PPM (`P6`, maxval 255).
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + 3 * img.r.len());
    out.extend_from_slice(header.as_bytes());
    for i in 0..img.r.len() {
        out.push(quantize(img.r[i]));
        out.push(quantize(img.g[i]));
        out.push(quantize(img.b[i]));
    }
    out
}

pub fn save_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

/// Parses a manifest CSV with header `dist_path,ref_path,score,std`.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<SubjectiveEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest_str(&text, base)
}

/// Parses manifest text, resolving relative paths against `base`.
pub fn parse_manifest_str(text: &str, base: &Path) -> Result<Vec<SubjectiveEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(Error::MissingHeader),
    };
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::MissingHeader);
    }
    let mut entries = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(Error::ColumnCount {
                line,
                expected: MANIFEST_HEADER.len(),
                found: rec.len(),
            });
        }
        let (dist, refp, score, std) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        if dist.is_empty() || refp.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "manifest line {line}: empty path"
            )));
        }
        let subjective_score: f64 = score
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::NonNumericScore {
                line,
                value: score.to_string(),
            })?;
        let score_std = if std.is_empty() {
            None
        } else {
            Some(
                std.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| Error::InvalidStd {
                        line,
                        value: std.to_string(),
                    })?,
            )
        };
        entries.push(SubjectiveEntry {
            distorted_key: dist.to_string(),
            reference_key: refp.to_string(),
            distorted_path: base.join(dist),
            reference_path: base.join(refp),
            subjective_score,
            score_std,
        });
    }
    Ok(entries)
}

/// Serializes entries back to manifest CSV using their original path keys.
pub fn write_manifest<W: Write>(entries: &[SubjectiveEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_HEADER)?;
    for e in entries {
        let std = e.score_std.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            e.distorted_key.as_str(),
            e.reference_key.as_str(),
            &e.subjective_score.to_string(),
            &std,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<manifest writer>", e))?;
    Ok(())
}
