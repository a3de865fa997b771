use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{ImageKind, ManifestEntry, Rect, SignatureImage, SpecimenMeta};
use crate::error::{Error, Result};

pub const DEFAULT_CANVAS: u32 = 512;
const MIN_CANVAS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Side of the square output canvas; the longer side of the cropped
    /// signature is scaled to exactly this many pixels.
    pub canvas: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            canvas: DEFAULT_CANVAS,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.canvas < MIN_CANVAS {
            return Err(Error::InvalidFeatureConfig(format!(
                "canvas must be at least {MIN_CANVAS} px, got {}",
                self.canvas
            )));
        }
        Ok(())
    }
}

/// Loads an image file as a grayscale signature. Metadata is taken from the
/// path: the file stem becomes the writer id.
pub fn load_image(path: impl AsRef<Path>) -> Result<SignatureImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let format = ImageFormat::from_path(path)
        .ok()
        .or_else(|| image::guess_format(&bytes).ok());
    let img = decode(&bytes, format).map_err(|e| match e {
        Error::UnreadableFile { reason, .. } => Error::UnreadableFile {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })?;
    let writer = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut meta = SpecimenMeta::new(writer, 0, super::Label::Genuine);
    meta.source = path.display().to_string();
    Ok(img.with_meta(meta))
}

/// Decodes an in-memory image, sniffing the format from its magic bytes.
pub fn load_image_bytes(bytes: &[u8]) -> Result<SignatureImage> {
    let format = image::guess_format(bytes).ok();
    decode(bytes, format)
}

/// Loads the image referenced by a manifest entry, applying its polarity flag.
pub fn load_entry(entry: &ManifestEntry) -> Result<SignatureImage> {
    let img = load_image(&entry.path)?;
    let img = if entry.invert { invert(img) } else { img };
    let mut meta = SpecimenMeta::new(entry.writer_id.clone(), entry.specimen, entry.label);
    meta.source = entry.path.display().to_string();
    Ok(img.with_meta(meta))
}

fn invert(img: SignatureImage) -> SignatureImage {
    let pixels = img.pixels().iter().map(|&p| 1.0 - p).collect();
    SignatureImage {
        pixels,
        ..img
    }
}

fn decode(bytes: &[u8], format: Option<ImageFormat>) -> Result<SignatureImage> {
    let format = match format {
        Some(f @ (ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Bmp | ImageFormat::Pnm)) => f,
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(Error::UnsupportedFormat("unrecognised image data".into())),
    };
    let dynamic = image::load_from_memory_with_format(bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::UnreadableFile {
            path: Default::default(),
            reason: other.to_string(),
        },
    })?;
    to_grayscale(&dynamic)
}

fn to_grayscale(img: &DynamicImage) -> Result<SignatureImage> {
    let (width, height) = (img.width(), img.height());
    let pixels: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect()
        }
        DynamicImage::ImageLumaA16(buf) => {
            buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                ((0.299 * r + 0.587 * g + 0.114 * b) / 255.0).clamp(0.0, 1.0) as f32
            })
            .collect(),
    };
    SignatureImage::new(width, height, pixels, ImageKind::Grayscale)
}

fn histogram_bin(p: f32) -> usize {
    (p * 255.0).round().clamp(0.0, 255.0) as usize
}

/// Otsu's threshold over a 256-bin intensity histogram.
///
/// Returns the bin index `t` maximising the between-class variance of the
/// split `{bins <= t}` / `{bins > t}`; the smallest maximiser wins ties.
pub fn otsu_threshold(img: &SignatureImage) -> Result<usize> {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[histogram_bin(p)] += 1;
    }
    let total = img.pixels().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let mut best: Option<(usize, f64)> = None;
    for (t, &count) in hist.iter().enumerate().take(255) {
        w0 += count as f64;
        sum0 += t as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t, between));
        }
    }
    match best {
        Some((t, v)) if v > 0.0 => Ok(t),
        _ => Err(Error::DegenerateImage),
    }
}

/// Otsu binarization; pixels at or below the threshold bin become ink (1).
pub fn binarize(img: &SignatureImage) -> Result<SignatureImage> {
    img.require_kind(ImageKind::Grayscale)?;
    let t = otsu_threshold(img)?;
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| if histogram_bin(p) <= t { 1.0 } else { 0.0 })
        .collect();
    Ok(SignatureImage::new(img.width(), img.height(), pixels, ImageKind::Binary)?
        .with_meta(img.meta.clone()))
}

/// Crops a binary image to its ink bounding box and rescales it with
/// nearest-neighbour sampling so the longer side spans the canvas. The result
/// is centred on a square background canvas.
pub fn crop_normalize(img: &SignatureImage, cfg: &PreprocessConfig) -> Result<SignatureImage> {
    img.require_kind(ImageKind::Binary)?;
    cfg.validate()?;
    let bbox = img.ink_bbox().ok_or(Error::EmptySignature)?;
    let placement = Placement::new(bbox, cfg.canvas);
    Ok(resample(img, bbox, &placement, 0.0, Sampling::Nearest)?.with_meta(img.meta.clone()))
}

/// Grayscale and binary views of one signature on the same canvas.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub gray: SignatureImage,
    pub binary: SignatureImage,
}

/// Full preprocessing: Otsu binarization, ink-box crop, and aspect-preserving
/// resize onto the canvas. The grayscale view is cropped to the same box and
/// resized bilinearly, padded with white paper.
pub fn preprocess(gray: &SignatureImage, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    gray.require_kind(ImageKind::Grayscale)?;
    cfg.validate()?;
    let binary = binarize(gray)?;
    let bbox = binary.ink_bbox().ok_or(Error::EmptySignature)?;
    let placement = Placement::new(bbox, cfg.canvas);
    let binary = resample(&binary, bbox, &placement, 0.0, Sampling::Nearest)?
        .with_meta(gray.meta.clone());
    let gray = resample(gray, bbox, &placement, 1.0, Sampling::Bilinear)?
        .with_meta(gray.meta.clone());
    Ok(Preprocessed { gray, binary })
}

#[derive(Debug, Clone, Copy)]
enum Sampling {
    Nearest,
    Bilinear,
}

struct Placement {
    canvas: u32,
    target: Rect,
}

impl Placement {
    fn new(bbox: Rect, canvas: u32) -> Self {
        let long = bbox.width.max(bbox.height) as u64;
        let scale = |side: u32| -> u32 {
            if side as u64 == long {
                canvas
            } else {
                // round(side * canvas / long), at least one pixel
                (((side as u64 * canvas as u64 * 2 + long) / (2 * long)) as u32).max(1)
            }
        };
        let (w, h) = (scale(bbox.width), scale(bbox.height));
        Self {
            canvas,
            target: Rect {
                x: (canvas - w) / 2,
                y: (canvas - h) / 2,
                width: w,
                height: h,
            },
        }
    }
}

fn resample(
    src: &SignatureImage,
    from: Rect,
    placement: &Placement,
    background: f32,
    sampling: Sampling,
) -> Result<SignatureImage> {
    let canvas = placement.canvas;
    let to = placement.target;
    let mut pixels = vec![background; canvas as usize * canvas as usize];
    let sx = from.width as f64 / to.width as f64;
    let sy = from.height as f64 / to.height as f64;
    for ty in 0..to.height {
        let fy = (ty as f64 + 0.5) * sy;
        for tx in 0..to.width {
            let fx = (tx as f64 + 0.5) * sx;
            let v = match sampling {
                Sampling::Nearest => {
                    let x = (fx as u32).min(from.width - 1);
                    let y = (fy as u32).min(from.height - 1);
                    src.get(from.x + x, from.y + y)
                }
                Sampling::Bilinear => bilinear(src, from, fx - 0.5, fy - 0.5),
            };
            pixels[(to.y + ty) as usize * canvas as usize + (to.x + tx) as usize] = v;
        }
    }
    Ok(SignatureImage::new(canvas, canvas, pixels, src.kind())?.with_content(to))
}

/// Bilinear sample at continuous coordinates relative to `from`, clamped to it.
fn bilinear(src: &SignatureImage, from: Rect, x: f64, y: f64) -> f32 {
    let max_x = (from.width - 1) as f64;
    let max_y = (from.height - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let (x0, y0) = (x.floor(), y.floor());
    let (x1, y1) = ((x0 + 1.0).min(max_x), (y0 + 1.0).min(max_y));
    let (ax, ay) = (x - x0, y - y0);
    let p = |xx: f64, yy: f64| src.get(from.x + xx as u32, from.y + yy as u32) as f64;
    let top = p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax;
    let bottom = p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax;
    (top * (1.0 - ay) + bottom * ay).clamp(0.0, 1.0) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> f32) -> SignatureImage {
        SignatureImage::from_fn(w, h, ImageKind::Grayscale, f).unwrap()
    }

    fn write_png(dir: &Path, name: &str, w: u32, h: u32, value: u8) -> std::path::PathBuf {
        let path = dir.join(name);
        image::GrayImage::from_pixel(w, h, image::Luma([value]))
            .save(&path)
            .unwrap();
        path
    }

    #[test]
    fn load_normalizes_intensity_and_keeps_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let white = load_image(write_png(dir.path(), "w.png", 300, 150, 255)).unwrap();
        assert_eq!((white.width(), white.height()), (300, 150));
        assert_eq!(white.kind(), ImageKind::Grayscale);
        assert!(white.pixels().iter().all(|&p| p == 1.0));
        let black = load_image(write_png(dir.path(), "b.png", 20, 20, 0)).unwrap();
        assert!(black.pixels().iter().all(|&p| p == 0.0));
        assert_eq!(black.meta.writer_id, "b");
    }

    #[test]
    fn rgb_uses_luminance_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        image::RgbImage::from_pixel(16, 16, image::Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.get(3, 3) - 0.299).abs() < 1e-6);
    }

    #[test]
    fn pgm_and_bmp_load() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.pgm", "a.bmp", "a.jpg"] {
            let path = dir.path().join(name);
            image::GrayImage::from_pixel(17, 18, image::Luma([128]))
                .save(&path)
                .unwrap();
            let img = load_image(&path).unwrap();
            assert_eq!((img.width(), img.height()), (17, 18));
        }
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::UnreadableFile { .. })
        ));
        let corrupt = dir.path().join("bad.png");
        std::fs::write(&corrupt, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(matches!(load_image(&corrupt), Err(Error::UnreadableFile { .. })));
        let text = dir.path().join("notes.txt");
        std::fs::write(&text, b"hello").unwrap();
        assert!(matches!(load_image(&text), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn load_entry_applies_metadata_and_inversion() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_png(dir.path(), "x.png", 16, 16, 255);
        let entry = ManifestEntry {
            writer_id: "w7".into(),
            specimen: 3,
            label: Label::Forgery,
            path,
            invert: true,
        };
        let img = load_entry(&entry).unwrap();
        assert_eq!(img.meta.writer_id, "w7");
        assert_eq!(img.meta.specimen_index, 3);
        assert_eq!(img.meta.label, Label::Forgery);
        assert!(img.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bimodal_split_is_exact() {
        let img = gray(10, 10, |x, y| if (x + y) % 2 == 0 { 0.1 } else { 0.9 });
        let bin = binarize(&img).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(bin.is_ink(x, y), img.get(x, y) < 0.5);
            }
        }
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = gray(16, 16, |_, _| 0.42);
        assert!(matches!(binarize(&img), Err(Error::DegenerateImage)));
    }

    /// Brute-force Otsu: evaluates the between-class variance of every split
    /// directly from the pixel list.
    fn otsu_oracle(values: &[f32]) -> usize {
        let bins: Vec<f64> = values.iter().map(|&p| histogram_bin(p) as f64).collect();
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for t in 0..255usize {
            let (lo, hi): (Vec<f64>, Vec<f64>) = bins.iter().partition(|&&b| b <= t as f64);
            if lo.is_empty() || hi.is_empty() {
                continue;
            }
            let n = bins.len() as f64;
            let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
            let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
            let v = w0 * w1 * (m0 - m1).powi(2);
            if v > best.1 + 1e-12 {
                best = (t, v);
            }
        }
        best.0
    }

    #[test]
    fn four_by_four_two_level_image() {
        // Arbitrary arrangement of eight 0.0 and eight 1.0 pixels.
        let layout = [0, 1, 1, 0, 1, 0, 0, 1, 0, 0, 1, 1, 1, 1, 0, 0];
        let img = gray(4, 4, |x, y| layout[(y * 4 + x) as usize] as f32);
        let t = otsu_threshold(&img).unwrap();
        assert_eq!(t, otsu_oracle(img.pixels()));
        assert_eq!(t, 0);
        assert_eq!(binarize(&img).unwrap().ink_count(), 8);
    }

    #[test]
    fn otsu_matches_brute_force_on_random_images() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let vals: Vec<f32> = (0..64).map(|_| rng.random_range(0..=255) as f32 / 255.0).collect();
            let img = SignatureImage::new(8, 8, vals.clone(), ImageKind::Grayscale).unwrap();
            match otsu_threshold(&img) {
                Ok(t) => assert_eq!(t, otsu_oracle(&vals)),
                Err(_) => assert!(vals.iter().all(|&v| v == vals[0])),
            }
        }
    }

    #[test]
    fn binarize_is_idempotent_through_grayscale() {
        let img = gray(32, 20, |x, y| if (x * 7 + y * 3) % 5 == 0 { 0.2 } else { 0.8 });
        let once = binarize(&img).unwrap();
        let twice = binarize(&once.binary_as_grayscale().unwrap()).unwrap();
        assert_eq!(once.pixels(), twice.pixels());
    }

    fn binary(w: u32, h: u32, ink: impl Fn(u32, u32) -> bool) -> SignatureImage {
        SignatureImage::from_fn(w, h, ImageKind::Binary, |x, y| ink(x, y) as u8 as f32).unwrap()
    }

    #[test]
    fn single_ink_pixel_survives_crop() {
        let img = binary(100, 100, |x, y| x == 10 && y == 10);
        let cfg = PreprocessConfig { canvas: 64 };
        let out = crop_normalize(&img, &cfg).unwrap();
        assert_eq!((out.width(), out.height()), (64, 64));
        // A 1x1 box scales to fill the whole canvas.
        assert_eq!(out.ink_count(), 64 * 64);
    }

    #[test]
    fn crop_box_is_tight() {
        let img = binary(120, 40, |x, y| (7..=80).contains(&x) && (5..=20).contains(&y));
        assert_eq!(
            img.ink_bbox().unwrap(),
            Rect {
                x: 7,
                y: 5,
                width: 74,
                height: 16
            }
        );
        let out = crop_normalize(&img, &PreprocessConfig { canvas: 148 }).unwrap();
        // 74x16 doubles to 148x32, centred vertically.
        assert_eq!(
            out.content(),
            Rect {
                x: 0,
                y: 58,
                width: 148,
                height: 32
            }
        );
        assert_eq!(out.ink_bbox().unwrap(), out.content());
        assert_eq!(out.ink_count(), 148 * 32);
    }

    #[test]
    fn blank_image_is_empty_signature() {
        let img = binary(30, 30, |_, _| false);
        assert!(matches!(
            crop_normalize(&img, &PreprocessConfig::default()),
            Err(Error::EmptySignature)
        ));
    }

    #[test]
    fn canvas_size_is_fixed() {
        for (w, h) in [(40u32, 17u32), (17, 40), (200, 200), (513, 31)] {
            let img = binary(w, h, |x, y| (x + y) % 3 == 0);
            let out = crop_normalize(&img, &PreprocessConfig::default()).unwrap();
            assert_eq!((out.width(), out.height()), (DEFAULT_CANVAS, DEFAULT_CANVAS));
            let content = out.content();
            assert_eq!(content.width.max(content.height), DEFAULT_CANVAS);
        }
    }

    #[test]
    fn preprocess_is_deterministic_and_translation_free() {
        let stroke = |x: i64, y: i64| ((x - 20).pow(2) + (y - 12).pow(2) < 60) || (x > 10 && x < 50 && y == 12);
        let a = gray(80, 40, |x, y| if stroke(x as i64, y as i64) { 0.15 } else { 0.95 });
        let b = gray(90, 60, |x, y| if stroke(x as i64 - 7, y as i64 - 11) { 0.15 } else { 0.95 });
        let cfg = PreprocessConfig { canvas: 96 };
        let pa = preprocess(&a, &cfg).unwrap();
        let pb = preprocess(&b, &cfg).unwrap();
        assert_eq!(pa.binary.pixels(), pb.binary.pixels());
        assert_eq!(pa.gray.pixels(), pb.gray.pixels());
        assert_eq!(pa.gray.content(), pa.binary.content());
        let again = preprocess(&a, &cfg).unwrap();
        assert_eq!(pa.gray.pixels(), again.gray.pixels());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let img = binary(20, 20, |x, _| x < 10);
        assert!(matches!(binarize(&img), Err(Error::WrongImageKind { .. })));
    }
}
