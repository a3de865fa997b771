//! Texture of ink deposition: local binary patterns (LBP), local derivative
//! patterns (LDP) and their DCT-II compressions.
//!
//! Codes are read from the 8-neighbourhood at radius 1, neighbours ordered
//! anticlockwise starting at the right-hand pixel (bit 0). Only pixels within
//! `ink_margin` (Chebyshev distance) of ink are sampled when an ink mask is
//! given. Code 255 shares the last bin with 254 so each histogram has
//! `code_bins` entries.
//!
//! * `t1`: one LBP plane per gray-level threshold `tau`; bit k is set when
//!   neighbour k is brighter than the centre by more than `tau`.
//! * `t2`: second-order LDP accumulated over the 0, 45, 90 and 135 degree
//!   first derivatives; bit k is set when the derivative changes sign between
//!   the centre and neighbour k.
//! * `t3`, `t4`: leading orthonormal DCT-II coefficients of `t1` and `t2`.
//!
//! Histograms are normalised to sum to one before the transform.

use std::f64::consts::PI;

use super::{Channel, FeatureVector, TexturalConfig};
use crate::corpus::{ImageKind, SignatureImage};
use crate::error::{Error, Result};

/// Neighbour offsets, anticlockwise from the right (y down).
const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Offsets for the first derivatives at 0, 45, 90 and 135 degrees.
const DERIVATIVES: [(i64, i64); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Orthonormal DCT-II, first `k` coefficients.
pub fn dct2(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..k)
        .map(|j| {
            let scale = if j == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * (i as f64 + 0.5) * j as f64 / n).cos())
                .sum();
            scale * sum
        })
        .collect()
}

/// Pixels whose texture is sampled: inside the content region, far enough
/// from the raster border for the operator, and (with a mask) near ink.
fn sample_mask(img: &SignatureImage, ink: Option<&SignatureImage>, margin: u32) -> Result<Vec<bool>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let content = img.content();
    let mut mask = vec![false; w * h];
    for y in content.y..content.bottom() {
        for x in content.x..content.right() {
            mask[y as usize * w + x as usize] = true;
        }
    }
    if let Some(ink) = ink {
        ink.require_kind(ImageKind::Binary)?;
        if (ink.width(), ink.height()) != (img.width(), img.height()) {
            return Err(Error::UnsupportedFormat(
                "ink mask and grayscale image differ in size".into(),
            ));
        }
        let m = margin as usize;
        // separable Chebyshev dilation
        let mut rows = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if ink.is_ink(x as u32, y as u32) {
                    for xx in x.saturating_sub(m)..=(x + m).min(w - 1) {
                        rows[y * w + xx] = true;
                    }
                }
            }
        }
        let mut near = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if rows[y * w + x] {
                    for yy in y.saturating_sub(m)..=(y + m).min(h - 1) {
                        near[yy * w + x] = true;
                    }
                }
            }
        }
        mask.iter_mut().zip(near).for_each(|(s, n)| *s &= n);
    }
    Ok(mask)
}

pub fn extract_textural(
    img: &SignatureImage,
    ink: Option<&SignatureImage>,
    cfg: &TexturalConfig,
) -> Result<[FeatureVector; 4]> {
    img.require_kind(ImageKind::Grayscale)?;
    let mask = sample_mask(img, ink, cfg.ink_margin)?;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let px = |x: i64, y: i64| img.get(x as u32, y as u32) as f64;
    let last = cfg.code_bins - 1;
    let planes = cfg.lbp_thresholds.len();

    let mut lbp = vec![0.0f64; planes * cfg.code_bins];
    let mut ldp = vec![0.0f64; cfg.code_bins];
    let (mut lbp_n, mut ldp_n) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !mask[(y * w + x) as usize] {
                continue;
            }
            if x >= 1 && y >= 1 && x < w - 1 && y < h - 1 {
                let c = px(x, y);
                for (p, &tau) in cfg.lbp_thresholds.iter().enumerate() {
                    let mut code = 0usize;
                    for (k, (dx, dy)) in NEIGHBOURS.iter().enumerate() {
                        if px(x + dx, y + dy) - c > tau as f64 {
                            code |= 1 << k;
                        }
                    }
                    lbp[p * cfg.code_bins + code.min(last)] += 1.0;
                }
                lbp_n += 1;
            }
            if x >= 2 && y >= 2 && x < w - 2 && y < h - 2 {
                for (ddx, ddy) in DERIVATIVES {
                    let d = |xx: i64, yy: i64| px(xx, yy) - px(xx + ddx, yy + ddy);
                    let centre = d(x, y);
                    let mut code = 0usize;
                    for (k, (dx, dy)) in NEIGHBOURS.iter().enumerate() {
                        if centre * d(x + dx, y + dy) < 0.0 {
                            code |= 1 << k;
                        }
                    }
                    ldp[code.min(last)] += 1.0;
                    ldp_n += 1;
                }
            }
        }
    }
    if lbp_n == 0 || ldp_n == 0 {
        return Err(Error::EmptySignature);
    }
    let lbp_total = (lbp_n * planes) as f64;
    lbp.iter_mut().for_each(|v| *v /= lbp_total);
    ldp.iter_mut().for_each(|v| *v /= ldp_n as f64);

    let t3 = dct2(&lbp, cfg.lbp_dct);
    let t4 = dct2(&ldp, cfg.ldp_dct);
    Ok([
        FeatureVector::new(Channel::T1, lbp)?,
        FeatureVector::new(Channel::T2, ldp)?,
        FeatureVector::new(Channel::T3, t3)?,
        FeatureVector::new(Channel::T4, t4)?,
    ])
}
