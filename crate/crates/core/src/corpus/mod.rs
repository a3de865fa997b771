//! Signature corpora: image loading, preprocessing and dataset manifests.

mod image_ops;
mod manifest;

pub use image_ops::{
    binarize, crop_normalize, load_image, load_image_bytes, load_entry, otsu_threshold,
    preprocess, Preprocessed, PreprocessConfig, DEFAULT_CANVAS,
};
pub use manifest::{scan_manifest, CorpusManifest, Layout, ManifestEntry, NamingRule};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Forgery,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::Forgery => "forgery",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "forgery" => Ok(Label::Forgery),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Grayscale,
    Binary,
}

/// Identity of one specimen within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpecimenMeta {
    pub writer_id: String,
    pub specimen_index: u32,
    pub label: Label,
    pub source: String,
}

impl SpecimenMeta {
    pub fn new(writer_id: impl Into<String>, specimen_index: u32, label: Label) -> Self {
        Self {
            writer_id: writer_id.into(),
            specimen_index,
            label,
            source: String::new(),
        }
    }
}

impl Default for SpecimenMeta {
    fn default() -> Self {
        Self::new("", 0, Label::Genuine)
    }
}

/// Axis-aligned pixel rectangle, half-open on the right and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }
}

/// A raster signature with intensities in `[0, 1]`.
///
/// Grayscale images keep the scanner's polarity (ink dark, paper near 1).
/// Binary images hold `1.0` for ink and `0.0` for background.
///
/// `content` marks the region carrying signature pixels. It covers the whole
/// raster except after [`crop_normalize`], where the scaled signature is
/// centred on a padded square canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureImage {
    width: u32,
    height: u32,
    pixels: Vec<f32>,
    kind: ImageKind,
    content: Rect,
    pub meta: SpecimenMeta,
}

impl SignatureImage {
    pub fn new(width: u32, height: u32, pixels: Vec<f32>, kind: ImageKind) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptySignature);
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::UnsupportedFormat(format!(
                "pixel buffer of {} values for a {width}x{height} raster",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::UnsupportedFormat(
                "pixel intensities must lie in [0, 1]".into(),
            ));
        }
        if kind == ImageKind::Binary && pixels.iter().any(|&p| p != 0.0 && p != 1.0) {
            return Err(Error::UnsupportedFormat(
                "binary image holds values other than 0 and 1".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
            kind,
            content: Rect {
                x: 0,
                y: 0,
                width,
                height,
            },
            meta: SpecimenMeta::default(),
        })
    }

    /// Builds a grayscale image from a per-pixel function of `(x, y)`.
    pub fn from_fn(
        width: u32,
        height: u32,
        kind: ImageKind,
        f: impl Fn(u32, u32) -> f32,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels, kind)
    }

    pub fn with_meta(mut self, meta: SpecimenMeta) -> Self {
        self.meta = meta;
        self
    }

    pub(crate) fn with_content(mut self, content: Rect) -> Self {
        self.content = content;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn kind(&self) -> ImageKind {
        self.kind
    }

    pub fn content(&self) -> Rect {
        self.content
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Ink test for binary images.
    #[inline]
    pub fn is_ink(&self, x: u32, y: u32) -> bool {
        self.get(x, y) > 0.5
    }

    pub fn require_kind(&self, expected: ImageKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::WrongImageKind {
                kind: self.kind,
                expected,
            })
        }
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0.5).count()
    }

    /// Tight bounding box of ink pixels of a binary image.
    pub fn ink_bbox(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_ink(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| Rect {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        })
    }

    /// Maps a binary mask back to a grayscale raster (ink dark, paper white).
    pub fn binary_as_grayscale(&self) -> Result<SignatureImage> {
        self.require_kind(ImageKind::Binary)?;
        let pixels = self.pixels.iter().map(|&p| 1.0 - p).collect();
        Ok(SignatureImage {
            pixels,
            kind: ImageKind::Grayscale,
            ..self.clone()
        })
    }
}
