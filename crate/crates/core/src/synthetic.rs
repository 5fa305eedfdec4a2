//! Procedural test images and standard degradations.
//!
//! The generator layers smooth color gradients, a few oriented sinusoidal
//! textures and hard-edged shapes so that images carry both low-frequency
//! color content and sharp structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imageio::RgbImage;

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

/// A deterministic image with gradients, textures and hard edges.
pub fn natural_like_image(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let base: [f64; 3] = [
        rng.random_range(0.2..0.6),
        rng.random_range(0.2..0.6),
        rng.random_range(0.2..0.6),
    ];
    let grad: [[f64; 2]; 3] =
        std::array::from_fn(|_| [rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25)]);
    let textures: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let freq: f64 = rng.random_range(0.15..0.9);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let amp: f64 = rng.random_range(0.03..0.09);
            let tint = [
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
            ];
            (angle, freq, phase, amp, tint)
        })
        .collect();
    let shapes: Vec<(Shape, [f64; 3])> = (0..6)
        .map(|i| {
            let color = [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ];
            let shape = if i % 2 == 0 {
                Shape::Disc {
                    cx: rng.random_range(0.0..w),
                    cy: rng.random_range(0.0..h),
                    r: rng.random_range(0.08..0.25) * w.min(h),
                }
            } else {
                let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.1..0.4) * w,
                    y1: y0 + rng.random_range(0.1..0.4) * h,
                }
            };
            (shape, color)
        })
        .collect();

    RgbImage::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let (u, v) = (fx / w - 0.5, fy / h - 0.5);
        let mut px: [f64; 3] =
            std::array::from_fn(|c| base[c] + grad[c][0] * u * 2.0 + grad[c][1] * v * 2.0);
        for (shape, color) in &shapes {
            if shape.contains(fx, fy) {
                for c in 0..3 {
                    px[c] = 0.35 * px[c] + 0.65 * color[c];
                }
            }
        }
        for &(angle, freq, phase, amp, tint) in &textures {
            let t = (freq * (fx * angle.cos() + fy * angle.sin()) + phase).sin() * amp;
            for c in 0..3 {
                px[c] += t * tint[c];
            }
        }
        px
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn blur_plane(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, c)| c * plane[y * w + reflect(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, c)| c * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                .sum::<f64>()
                .clamp(0.0, 1.0);
        }
    }
    out
}

/// Separable Gaussian blur with symmetric border reflection.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    RgbImage::from_planes(
        w,
        h,
        blur_plane(img.r(), w, h, &k),
        blur_plane(img.g(), w, h, &k),
        blur_plane(img.b(), w, h, &k),
    )
    .expect("blur preserves shape and range")
}

/// Adds i.i.d. Gaussian noise to every sample, clamping to `[0, 1]`.
pub fn add_gaussian_noise(img: &RgbImage, sigma: f64, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut noisy = |plane: &[f64]| -> Vec<f64> {
        plane
            .iter()
            .map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect()
    };
    let (r, g, b) = (noisy(img.r()), noisy(img.g()), noisy(img.b()));
    RgbImage::from_planes(img.width(), img.height(), r, g, b)
        .expect("noise preserves shape and range")
}
