//! Ink run-length histograms, a proxy for stroke width.

use super::{Channel, FeatureVector, RunLengthConfig};
use crate::corpus::{ImageKind, SignatureImage};
use crate::error::{Error, Result};

/// Scan directions as `(dx, dy)` with y pointing down: horizontal, vertical,
/// 45 degrees (up-right) and 135 degrees (up-left).
pub const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (0, 1), (1, -1), (-1, -1)];

/// Lengths of all maximal ink runs along `dir`.
pub fn runs(img: &SignatureImage, dir: (i64, i64)) -> Vec<usize> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let ink = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && img.is_ink(x as u32, y as u32);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            // a run starts where the predecessor is not ink
            if !ink(x, y) || ink(x - dir.0, y - dir.1) {
                continue;
            }
            let mut len = 0;
            let (mut cx, mut cy) = (x, y);
            while ink(cx, cy) {
                len += 1;
                cx += dir.0;
                cy += dir.1;
            }
            out.push(len);
        }
    }
    out
}

pub fn extract_runlength(img: &SignatureImage, cfg: &RunLengthConfig) -> Result<FeatureVector> {
    img.require_kind(ImageKind::Binary)?;
    if img.ink_count() == 0 {
        return Err(Error::EmptySignature);
    }
    let bins = cfg.max_run;
    let mut values = Vec::with_capacity(4 * bins);
    for dir in DIRECTIONS {
        let mut hist = vec![0.0f64; bins];
        let lengths = runs(img, dir);
        for &len in &lengths {
            hist[len.min(bins) - 1] += 1.0;
        }
        if !lengths.is_empty() {
            let total = lengths.len() as f64;
            hist.iter_mut().for_each(|v| *v /= total);
        }
        values.extend(hist);
    }
    FeatureVector::new(Channel::Rl, values)
}
