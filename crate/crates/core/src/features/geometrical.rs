//! Contour geometry in Cartesian and polar coordinates.
//!
//! Everything is measured inside the tight ink bounding box, so the vector is
//! unchanged by translating the signature. Layout:
//!
//! 1. upper envelope: distance from the box top to the first ink pixel, for
//!    `envelope_bins` evenly spaced columns, as a fraction of box height;
//! 2. lower envelope: same, measured up from the box bottom;
//! 3. radial profile: for `radial_bins` rays leaving the ink centroid, the
//!    distance at which the ray leaves its outermost ink pixel, as a fraction
//!    of the longer box side;
//! 4. shape scalars: ink density, `w / (w + h)`, mean upper envelope, mean
//!    lower envelope, and the standard deviation of the envelope gap.

use std::f64::consts::TAU;

use super::{Channel, FeatureVector, GeometricalConfig};
use crate::corpus::{ImageKind, Rect, SignatureImage};
use crate::error::{Error, Result};

pub const SHAPE_SCALARS: usize = 5;

pub fn extract_geometrical(img: &SignatureImage, cfg: &GeometricalConfig) -> Result<FeatureVector> {
    img.require_kind(ImageKind::Binary)?;
    let bbox = img.ink_bbox().ok_or(Error::EmptySignature)?;
    let (w, h) = (bbox.width as usize, bbox.height as usize);

    // first and last ink row per column, relative to the box
    let mut top = vec![None; w];
    let mut bottom = vec![None; w];
    let (mut ink, mut sum_x, mut sum_y) = (0usize, 0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            if img.is_ink(bbox.x + x as u32, bbox.y + y as u32) {
                top[x].get_or_insert(y);
                bottom[x] = Some(y);
                ink += 1;
                sum_x += x as f64 + 0.5;
                sum_y += y as f64 + 0.5;
            }
        }
    }

    let bins = cfg.envelope_bins;
    let sample = |b: usize| (((b as f64 + 0.5) * w as f64 / bins as f64) as usize).min(w - 1);
    let upper = fill_gaps(
        (0..bins)
            .map(|b| top[sample(b)].map(|t| t as f64 / h as f64))
            .collect(),
    );
    let lower = fill_gaps(
        (0..bins)
            .map(|b| bottom[sample(b)].map(|l| (h - 1 - l) as f64 / h as f64))
            .collect(),
    );

    let centroid = (sum_x / ink as f64, sum_y / ink as f64);
    let norm = w.max(h) as f64;
    let radial = (0..cfg.radial_bins).map(|k| {
        let theta = (k as f64 + 0.5) * TAU / cfg.radial_bins as f64;
        // y grows downwards in the raster; angles run counter-clockwise
        let dir = (theta.cos(), -theta.sin());
        ray_exit(img, bbox, centroid, dir) / norm
    });

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gaps: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| 1.0 - u - l).collect();
    let gap_mean = mean(&gaps);
    let gap_std = (gaps.iter().map(|g| (g - gap_mean).powi(2)).sum::<f64>() / gaps.len() as f64).sqrt();
    let scalars = [
        ink as f64 / (w * h) as f64,
        w as f64 / (w + h) as f64,
        mean(&upper),
        mean(&lower),
        gap_std,
    ];

    let mut values = Vec::with_capacity(2 * bins + cfg.radial_bins + SHAPE_SCALARS);
    values.extend_from_slice(&upper);
    values.extend_from_slice(&lower);
    values.extend(radial);
    values.extend_from_slice(&scalars);
    FeatureVector::new(Channel::G, values)
}

/// Replaces empty samples with the nearest populated one (left wins ties).
fn fill_gaps(samples: Vec<Option<f64>>) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            (0..n)
                .find_map(|d| {
                    let left = i.checked_sub(d).and_then(|j| samples[j]);
                    left.or_else(|| samples.get(i + d).copied().flatten())
                })
                .unwrap_or(0.0)
        })
        .collect()
}

/// Walks the pixel grid along a ray (Amanatides-Woo traversal) starting at
/// `origin` (box coordinates, pixel units) and returns the ray parameter at
/// which it leaves the last ink pixel it crosses, or 0 when it meets none.
fn ray_exit(img: &SignatureImage, bbox: Rect, origin: (f64, f64), dir: (f64, f64)) -> f64 {
    let (w, h) = (bbox.width as i64, bbox.height as i64);
    let (ox, oy) = origin;
    let (dx, dy) = dir;
    let mut ix = ox.floor() as i64;
    let mut iy = oy.floor() as i64;

    let axis = |o: f64, i: i64, d: f64| -> (i64, f64, f64) {
        if d > 1e-15 {
            (1, (i as f64 + 1.0 - o) / d, 1.0 / d)
        } else if d < -1e-15 {
            (-1, (o - i as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, delta_x) = axis(ox, ix, dx);
    let (step_y, mut t_max_y, delta_y) = axis(oy, iy, dy);

    let mut last = 0.0;
    while (0..w).contains(&ix) && (0..h).contains(&iy) {
        let exit = t_max_x.min(t_max_y);
        if img.is_ink(bbox.x + ix as u32, bbox.y + iy as u32) {
            last = exit;
        }
        if t_max_x < t_max_y {
            ix += step_x;
            t_max_x += delta_x;
        } else if t_max_y < t_max_x {
            iy += step_y;
            t_max_y += delta_y;
        } else {
            // exact corner crossing
            ix += step_x;
            iy += step_y;
            t_max_x += delta_x;
            t_max_y += delta_y;
        }
    }
    last
}
