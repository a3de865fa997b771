//! Gradient-orientation histograms over a two-level quadtree.
//!
//! Sobel gradients are computed over the signature region of the grayscale
//! image (border pixels replicated). The region is split into 1, 4 and 16
//! cells; each cell gets a magnitude-weighted histogram of the orientation
//! `atan2(gy, gx)` over `[0, 2*pi)` (x to the right, y downwards), then L2
//! normalised. Cells without gradient energy stay all-zero.

use std::f64::consts::TAU;

use super::{Channel, FeatureVector, QuadtreeConfig};
use crate::corpus::{ImageKind, Rect, SignatureImage};
use crate::error::Result;

/// Sobel response `(gx, gy)` at every pixel of `region`, row-major.
pub(crate) fn sobel(img: &SignatureImage, region: Rect) -> Vec<(f64, f64)> {
    let (w, h) = (region.width as i64, region.height as i64);
    let at = |x: i64, y: i64| {
        let x = x.clamp(0, w - 1) as u32 + region.x;
        let y = y.clamp(0, h - 1) as u32 + region.y;
        img.get(x, y) as f64
    };
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out.push((gx, gy));
        }
    }
    out
}

pub fn orientation_bin(gx: f64, gy: f64, bins: usize) -> usize {
    let theta = gy.atan2(gx).rem_euclid(TAU);
    ((theta / TAU * bins as f64) as usize).min(bins - 1)
}

pub fn extract_quadtree_gradient(img: &SignatureImage, cfg: &QuadtreeConfig) -> Result<FeatureVector> {
    img.require_kind(ImageKind::Grayscale)?;
    let region = img.content();
    let grad = sobel(img, region);
    let (w, h) = (region.width as usize, region.height as usize);

    let mut values = Vec::new();
    for (level, &bins) in cfg.level_bins.iter().enumerate() {
        let splits = 1usize << level;
        for cy in 0..splits {
            let (y0, y1) = (cy * h / splits, (cy + 1) * h / splits);
            for cx in 0..splits {
                let (x0, x1) = (cx * w / splits, (cx + 1) * w / splits);
                let mut hist = vec![0.0f64; bins];
                for y in y0..y1 {
                    for &(gx, gy) in &grad[y * w + x0..y * w + x1] {
                        let mag = gx.hypot(gy);
                        if mag > 0.0 {
                            hist[orientation_bin(gx, gy, bins)] += mag;
                        }
                    }
                }
                let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    hist.iter_mut().for_each(|v| *v /= norm);
                }
                values.extend(hist);
            }
        }
    }
    FeatureVector::new(Channel::Qt, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;

    fn cfg() -> QuadtreeConfig {
        FeatureConfig::checked_in().quadtree
    }

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> f32) -> SignatureImage {
        SignatureImage::from_fn(w, h, ImageKind::Grayscale, f).unwrap()
    }

    #[test]
    fn dimension_is_200() {
        let img = gray(37, 23, |x, y| ((x * 3 + y * 5) % 11) as f32 / 10.0);
        assert_eq!(extract_quadtree_gradient(&img, &cfg()).unwrap().dim(), 200);
    }

    #[test]
    fn constant_image_gives_zero_vector() {
        let img = gray(32, 32, |_, _| 0.7);
        let v = extract_quadtree_gradient(&img, &cfg()).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    /// Direct 3x3 convolution with replicated borders, written independently
    /// of `sobel`.
    fn brute_sobel(px: &[[f64; 16]; 16], x: usize, y: usize) -> (f64, f64) {
        const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
        let (mut gx, mut gy) = (0.0, 0.0);
        for (j, (rx, ry)) in KX.iter().zip(KY.iter()).enumerate() {
            for i in 0..3 {
                let sx = (x as i64 + i as i64 - 1).clamp(0, 15) as usize;
                let sy = (y as i64 + j as i64 - 1).clamp(0, 15) as usize;
                gx += rx[i] * px[sy][sx];
                gy += ry[i] * px[sy][sx];
            }
        }
        (gx, gy)
    }

    #[test]
    fn vertical_edge_loads_horizontal_gradient_bins() {
        // dark ink on the left, paper on the right, edge between columns 6 and 7
        let mut px = [[0.0f64; 16]; 16];
        for row in px.iter_mut() {
            for (x, p) in row.iter_mut().enumerate() {
                *p = if x < 7 { 0.1 } else { 0.9 };
            }
        }
        let img = gray(16, 16, |x, y| px[y as usize][x as usize] as f32);
        let grad = sobel(&img, img.content());
        for y in 0..16 {
            for x in 0..16 {
                let (gx, gy) = brute_sobel(&px, x, y);
                let (ax, ay) = grad[y * 16 + x];
                assert!((gx - ax).abs() < 1e-6 && (gy - ay).abs() < 1e-6);
            }
        }

        let cfg = cfg();
        let v = extract_quadtree_gradient(&img, &cfg).unwrap();
        let mut offset = 0;
        for (level, &bins) in cfg.level_bins.iter().enumerate() {
            let splits = 1usize << level;
            for cy in 0..splits {
                for cx in 0..splits {
                    let cell = &v.values()[offset..offset + bins];
                    offset += bins;
                    let (x0, x1) = (cx * 16 / splits, (cx + 1) * 16 / splits);
                    let crosses = x0 <= 7 && x1 >= 7;
                    let energy: f64 = cell.iter().map(|c| c * c).sum();
                    if !crosses {
                        assert_eq!(energy, 0.0, "level {level} cell ({cx},{cy})");
                        continue;
                    }
                    // all mass at orientation 0 (gx > 0, gy = 0)
                    let horizontal = orientation_bin(1.0, 0.0, bins);
                    assert_eq!(horizontal, 0);
                    assert!((cell[horizontal] - 1.0).abs() < 1e-12, "{cell:?}");
                }
            }
        }
        assert_eq!(offset, 200);
    }
}
