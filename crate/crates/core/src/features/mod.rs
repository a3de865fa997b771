//! Explainable handcrafted feature channels and the feature exchange format.
//!
//! | channel | family                               | dim |
//! |---------|--------------------------------------|-----|
//! | `g`     | geometrical (envelopes, polar contour)| 445 |
//! | `qt`    | quadtree gradient orientation        | 200 |
//! | `rl`    | run-length in four directions        | 400 |
//! | `t1`    | local binary patterns                | 765 |
//! | `t2`    | local derivative patterns            | 255 |
//! | `t3`    | DCT of `t1`                          | 168 |
//! | `t4`    | DCT of `t2`                          | 167 |
//!
//! Externally computed vectors (for instance CNN embeddings) travel as
//! `ext:<name>` channels and are never computed here.

mod config;
mod exchange;
pub mod geometrical;
pub mod quadtree;
pub mod runlength;
pub mod textural;

pub use config::{FeatureConfig, GeometricalConfig, QuadtreeConfig, RunLengthConfig, TexturalConfig};
pub use exchange::{ingest_external, read_feature_file, write_feature_file, write_feature_sets, FeatureRecord};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_entry, preprocess, Label, ManifestEntry, PreprocessConfig, Preprocessed, SignatureImage, SpecimenMeta};
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Channel {
    G,
    Qt,
    Rl,
    T1,
    T2,
    T3,
    T4,
    Ext(String),
}

impl Channel {
    pub const HANDCRAFTED: [Channel; 7] = [
        Channel::G,
        Channel::Qt,
        Channel::Rl,
        Channel::T1,
        Channel::T2,
        Channel::T3,
        Channel::T4,
    ];

    pub const TEXTURAL: [Channel; 4] = [Channel::T1, Channel::T2, Channel::T3, Channel::T4];

    /// Fixed dimension of an in-repo channel; `None` for external ones.
    pub fn declared_dim(&self) -> Option<usize> {
        match self {
            Channel::G => Some(445),
            Channel::Qt => Some(200),
            Channel::Rl => Some(400),
            Channel::T1 => Some(765),
            Channel::T2 => Some(255),
            Channel::T3 => Some(168),
            Channel::T4 => Some(167),
            Channel::Ext(_) => None,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, Channel::Ext(_))
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::G => f.write_str("g"),
            Channel::Qt => f.write_str("qt"),
            Channel::Rl => f.write_str("rl"),
            Channel::T1 => f.write_str("t1"),
            Channel::T2 => f.write_str("t2"),
            Channel::T3 => f.write_str("t3"),
            Channel::T4 => f.write_str("t4"),
            Channel::Ext(name) => write!(f, "ext:{name}"),
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "g" => Channel::G,
            "qt" => Channel::Qt,
            "rl" => Channel::Rl,
            "t1" => Channel::T1,
            "t2" => Channel::T2,
            "t3" => Channel::T3,
            "t4" => Channel::T4,
            other => match other.strip_prefix("ext:") {
                Some(name) if !name.is_empty() => Channel::Ext(name.to_string()),
                _ => return Err(format!("unknown channel `{other}`")),
            },
        })
    }
}

impl TryFrom<String> for Channel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Channel> for String {
    fn from(c: Channel) -> String {
        c.to_string()
    }
}

/// Parses a comma-separated channel list; `t` expands to `t1,t2,t3,t4`.
/// Order is preserved and duplicates dropped.
pub fn parse_channels(list: &str) -> Result<Vec<Channel>> {
    let mut out: Vec<Channel> = Vec::new();
    for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let expanded = if token == "t" {
            Channel::TEXTURAL.to_vec()
        } else {
            vec![token
                .parse::<Channel>()
                .map_err(Error::InvalidFeatureConfig)?]
        };
        for c in expanded {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidFeatureConfig("no channels selected".into()));
    }
    Ok(out)
}

/// A fixed-length vector of finite values tagged with its channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    channel: Channel,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(channel: Channel, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(expected) = channel.declared_dim() {
            if values.len() != expected {
                return Err(Error::DimMismatch {
                    channel,
                    expected,
                    actual: values.len(),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(channel));
        }
        Ok(Self { channel, values })
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.channel.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// All feature vectors of one specimen, at most one per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub writer_id: String,
    pub specimen_index: u32,
    pub label: Label,
    vectors: BTreeMap<Channel, FeatureVector>,
}

impl FeatureSet {
    pub fn new(writer_id: impl Into<String>, specimen_index: u32, label: Label) -> Self {
        Self {
            writer_id: writer_id.into(),
            specimen_index,
            label,
            vectors: BTreeMap::new(),
        }
    }

    pub fn from_meta(meta: &SpecimenMeta) -> Self {
        Self::new(meta.writer_id.clone(), meta.specimen_index, meta.label)
    }

    /// Adds a vector; a second vector for the same channel is rejected.
    pub fn insert(&mut self, vector: FeatureVector) -> Result<()> {
        if self.vectors.contains_key(vector.channel()) {
            return Err(Error::MalformedRecord {
                line: 0,
                reason: format!(
                    "duplicate channel {} for writer {} specimen {}",
                    vector.channel(),
                    self.writer_id,
                    self.specimen_index
                ),
            });
        }
        self.vectors.insert(vector.channel().clone(), vector);
        Ok(())
    }

    pub fn with(mut self, vector: FeatureVector) -> Result<Self> {
        self.insert(vector)?;
        Ok(self)
    }

    pub fn get(&self, channel: &Channel) -> Option<&FeatureVector> {
        self.vectors.get(channel)
    }

    pub fn require(&self, channel: &Channel) -> Result<&FeatureVector> {
        self.get(channel).ok_or_else(|| Error::MissingChannel {
            channel: channel.clone(),
            writer_id: self.writer_id.clone(),
            specimen: self.specimen_index,
        })
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.vectors.keys()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &FeatureVector> {
        self.vectors.values()
    }

    pub fn key(&self) -> SpecimenKey {
        SpecimenKey {
            writer_id: self.writer_id.clone(),
            specimen: self.specimen_index,
            label: self.label,
        }
    }

    /// Keeps only the listed channels.
    pub fn restricted(&self, channels: &[Channel]) -> Result<Self> {
        let mut out = Self::new(self.writer_id.clone(), self.specimen_index, self.label);
        for c in channels {
            out.insert(self.require(c)?.clone())?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpecimenKey {
    pub writer_id: String,
    pub specimen: u32,
    pub label: Label,
}

/// Feature sets indexed by specimen identity, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    sets: Vec<FeatureSet>,
    index: HashMap<SpecimenKey, usize>,
}

impl FeatureStore {
    pub fn new(sets: Vec<FeatureSet>) -> Result<Self> {
        let mut index = HashMap::with_capacity(sets.len());
        for (i, s) in sets.iter().enumerate() {
            if index.insert(s.key(), i).is_some() {
                return Err(Error::DuplicateEntry {
                    writer_id: s.writer_id.clone(),
                    specimen: s.specimen_index,
                    label: s.label,
                });
            }
        }
        Ok(Self { sets, index })
    }

    pub fn get(&self, writer_id: &str, specimen: u32, label: Label) -> Option<&FeatureSet> {
        let key = SpecimenKey {
            writer_id: writer_id.to_string(),
            specimen,
            label,
        };
        self.index.get(&key).map(|&i| &self.sets[i])
    }

    pub fn sets(&self) -> &[FeatureSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Computes the requested handcrafted channels for one preprocessed
/// signature. External channels cannot be extracted.
pub fn extract(pre: &Preprocessed, channels: &[Channel], cfg: &FeatureConfig) -> Result<FeatureSet> {
    let mut set = FeatureSet::from_meta(&pre.gray.meta);
    let wants = |c: &Channel| channels.contains(c);
    if let Some(ext) = channels.iter().find(|c| c.is_external()) {
        return Err(Error::InvalidFeatureConfig(format!(
            "channel {ext} is external and cannot be extracted"
        )));
    }
    if pre.binary.ink_count() == 0 {
        return Err(Error::EmptySignature);
    }
    if wants(&Channel::G) {
        set.insert(geometrical::extract_geometrical(&pre.binary, &cfg.geometrical)?)?;
    }
    if wants(&Channel::Qt) {
        set.insert(quadtree::extract_quadtree_gradient(&pre.gray, &cfg.quadtree)?)?;
    }
    if wants(&Channel::Rl) {
        set.insert(runlength::extract_runlength(&pre.binary, &cfg.runlength)?)?;
    }
    if Channel::TEXTURAL.iter().any(wants) {
        let [t1, t2, t3, t4] =
            textural::extract_textural(&pre.gray, Some(&pre.binary), &cfg.textural)?;
        for v in [t1, t2, t3, t4] {
            if wants(v.channel()) {
                set.insert(v)?;
            }
        }
    }
    Ok(set)
}

/// [`extract`] over a batch, in input order.
pub fn extract_batch(
    images: &[Preprocessed],
    channels: &[Channel],
    cfg: &FeatureConfig,
    exec: Execution,
) -> Result<Vec<FeatureSet>> {
    exec.try_map(images, |pre| extract(pre, channels, cfg))
}

/// Preprocesses and extracts each raw grayscale image, in input order.
/// Only one preprocessed raster per worker is alive at a time.
pub fn featurize(
    images: &[SignatureImage],
    channels: &[Channel],
    pre: &PreprocessConfig,
    cfg: &FeatureConfig,
    exec: Execution,
) -> Result<Vec<FeatureSet>> {
    exec.try_map(images, |img| extract(&preprocess(img, pre)?, channels, cfg))
}

/// Loads, preprocesses and extracts each manifest entry, in entry order.
/// Images are decoded inside the workers, so a large corpus is never held
/// in memory at once.
pub fn featurize_entries(
    entries: &[ManifestEntry],
    channels: &[Channel],
    pre: &PreprocessConfig,
    cfg: &FeatureConfig,
    exec: Execution,
) -> Result<Vec<FeatureSet>> {
    exec.try_map(entries, |e| extract(&preprocess(&load_entry(e)?, pre)?, channels, cfg))
}
