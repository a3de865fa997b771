//! Seeded toy corpus with a known answer.
//!
//! Every identity (enrolled writer or UBM member) owns one rendered pattern:
//! a few random Bézier strokes of dark, textured ink on a noisy light tile.
//! Each specimen pastes that tile at a random offset onto a page of random
//! size and noise. Cropping to the ink box removes the page, so specimens of
//! the same identity yield identical features. Skilled forgeries reuse UBM
//! patterns, which makes the corpus perfectly separable: genuine queries sit
//! on their references and forgeries sit on UBM members.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusManifest, ImageKind, Label, ManifestEntry, SignatureImage, SpecimenMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub writers: usize,
    pub genuine: u32,
    pub forgeries: u32,
    pub ubm_members: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            writers: 8,
            genuine: 5,
            forgeries: 3,
            ubm_members: 24,
            seed: 7,
        }
    }
}

/// An 8-bit grayscale raster, the form in which the corpus is stored.
#[derive(Debug, Clone)]
struct Tile {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Tile {
    fn to_image(&self) -> Result<SignatureImage> {
        SignatureImage::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
            ImageKind::Grayscale,
        )
    }
}

fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(tag.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes))
}

fn pattern(rng: &mut ChaCha8Rng) -> Tile {
    let width = rng.random_range(150..=230u32);
    let height = rng.random_range(60..=100u32);
    let mut pixels: Vec<u8> = (0..width * height).map(|_| rng.random_range(228..=255)).collect();
    let margin = 8.0;
    let point = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(margin..width as f64 - margin),
            rng.random_range(margin..height as f64 - margin),
        )
    };
    for _ in 0..rng.random_range(3..=5) {
        let ctrl = [point(rng), point(rng), point(rng), point(rng)];
        let radius: f64 = rng.random_range(1.2..2.8);
        let ink: i32 = rng.random_range(20..=80);
        for k in 0..=240 {
            let t = k as f64 / 240.0;
            let u = 1.0 - t;
            let b = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
            let cx: f64 = ctrl.iter().zip(b).map(|(p, w)| p.0 * w).sum();
            let cy: f64 = ctrl.iter().zip(b).map(|(p, w)| p.1 * w).sum();
            let r = radius.ceil() as i64;
            for dy in -r..=r {
                for dx in -r..=r {
                    if ((dx * dx + dy * dy) as f64) > radius * radius {
                        continue;
                    }
                    let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                    if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                        continue;
                    }
                    let idx = (y as u32 * width + x as u32) as usize;
                    let shade = (ink + rng.random_range(-15..=15)).clamp(0, 100) as u8;
                    pixels[idx] = pixels[idx].min(shade);
                }
            }
        }
    }
    Tile { width, height, pixels }
}

/// Pastes `tile` onto a fresh page at a random offset.
fn page(tile: &Tile, rng: &mut ChaCha8Rng) -> Tile {
    let (left, top) = (rng.random_range(4..=60u32), rng.random_range(4..=60u32));
    let (right, bottom) = (rng.random_range(4..=60u32), rng.random_range(4..=60u32));
    let width = tile.width + left + right;
    let height = tile.height + top + bottom;
    let mut pixels: Vec<u8> = (0..width * height).map(|_| rng.random_range(232..=255)).collect();
    for y in 0..tile.height {
        let src = (y * tile.width) as usize;
        let dst = ((y + top) * width + left) as usize;
        pixels[dst..dst + tile.width as usize].copy_from_slice(&tile.pixels[src..src + tile.width as usize]);
    }
    Tile { width, height, pixels }
}

/// A generated specimen: metadata plus its 8-bit raster.
#[derive(Debug, Clone)]
pub struct SynthSpecimen {
    pub meta: SpecimenMeta,
    tile: Tile,
}

impl SynthSpecimen {
    pub fn image(&self) -> Result<SignatureImage> {
        Ok(self.tile.to_image()?.with_meta(self.meta.clone()))
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        let img = image::GrayImage::from_raw(self.tile.width, self.tile.height, self.tile.pixels.clone())
            .expect("tile buffer matches its size");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
        Ok(out.into_inner())
    }

    fn file_name(&self) -> String {
        format!("{}_{}_{:02}.png", self.meta.writer_id, self.meta.label, self.meta.specimen_index)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Enrolled writers: genuine specimens and skilled forgeries.
    pub specimens: Vec<SynthSpecimen>,
    /// One genuine specimen per background identity.
    pub ubm: Vec<SynthSpecimen>,
}

pub fn writer_id(k: usize) -> String {
    format!("w{k:03}")
}

pub fn ubm_id(k: usize) -> String {
    format!("u{k:03}")
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let ubm_patterns: Vec<Tile> = (0..cfg.ubm_members)
        .map(|k| pattern(&mut rng_for(cfg.seed, &format!("pattern/{}", ubm_id(k)))))
        .collect();
    let specimen = |id: &str, index: u32, label: Label, tile: &Tile| {
        let mut rng = rng_for(cfg.seed, &format!("page/{id}/{label}/{index}"));
        SynthSpecimen {
            meta: SpecimenMeta::new(id, index, label),
            tile: page(tile, &mut rng),
        }
    };
    let ubm = ubm_patterns
        .iter()
        .enumerate()
        .map(|(k, t)| specimen(&ubm_id(k), 1, Label::Genuine, t))
        .collect();
    let mut specimens = Vec::new();
    for w in 0..cfg.writers {
        let id = writer_id(w);
        let own = pattern(&mut rng_for(cfg.seed, &format!("pattern/{id}")));
        for s in 1..=cfg.genuine {
            specimens.push(specimen(&id, s, Label::Genuine, &own));
        }
        for s in 1..=cfg.forgeries {
            if ubm_patterns.is_empty() {
                break;
            }
            let source = &ubm_patterns[(w * cfg.forgeries as usize + s as usize) % ubm_patterns.len()];
            specimens.push(specimen(&id, s, Label::Forgery, source));
        }
    }
    SynthCorpus { specimens, ubm }
}

/// Paths written by [`SynthCorpus::write`].
#[derive(Debug, Clone)]
pub struct SynthLayout {
    pub corpus_manifest: PathBuf,
    pub ubm_manifest: PathBuf,
}

impl SynthCorpus {
    pub fn images(&self) -> Result<Vec<SignatureImage>> {
        self.specimens.iter().map(SynthSpecimen::image).collect()
    }

    pub fn ubm_images(&self) -> Result<Vec<SignatureImage>> {
        self.ubm.iter().map(SynthSpecimen::image).collect()
    }

    /// Writes PNGs under `dir/corpus` and `dir/ubm` with a flat-json
    /// manifest beside each.
    pub fn write(&self, dir: &Path) -> Result<SynthLayout> {
        let io = |path: &Path, e: std::io::Error| Error::IoFailure {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let mut out = Vec::new();
        for (sub, list) in [("corpus", &self.specimens), ("ubm", &self.ubm)] {
            let folder = dir.join(sub);
            std::fs::create_dir_all(&folder).map_err(|e| io(&folder, e))?;
            let mut entries = Vec::with_capacity(list.len());
            for s in list {
                let path = folder.join(s.file_name());
                std::fs::write(&path, s.png_bytes()?).map_err(|e| io(&path, e))?;
                entries.push(ManifestEntry {
                    writer_id: s.meta.writer_id.clone(),
                    specimen: s.meta.specimen_index,
                    label: s.meta.label,
                    path,
                    invert: false,
                });
            }
            let mut manifest = CorpusManifest {
                dataset_name: format!("synthetic-{sub}"),
                entries,
            };
            manifest.sort();
            let path = dir.join(format!("{sub}.json"));
            manifest.write_flat_json(&path)?;
            out.push(path);
        }
        Ok(SynthLayout {
            ubm_manifest: out.pop().expect("two manifests"),
            corpus_manifest: out.pop().expect("two manifests"),
        })
    }
}
