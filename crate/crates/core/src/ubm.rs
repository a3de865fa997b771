//! Universal background model: an ordered pool of genuine third-party
//! signatures in feature space.
//!
//! Persisted form (`.sig`): the first line is a JSON header
//! `{"schema_version", "origin", "channels", "size", "provenance"}`; every
//! following line is one feature exchange record. Only feature vectors are
//! stored, never images.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, Label};
use crate::error::{Error, Result};
use crate::features::{ingest_external, Channel, FeatureRecord, FeatureSet, FeatureStore};

pub const SCHEMA_VERSION: u32 = 1;

/// Default UBM size.
pub const DEFAULT_SIZE: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Real => "real",
            Origin::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(Origin::Real),
            "synthetic" => Ok(Origin::Synthetic),
            other => Err(format!("unknown UBM origin `{other}`")),
        }
    }
}

/// How members are drawn from an ordered corpus. Only genuine specimens are
/// ever selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// First genuine specimen of each of the first `n` writers.
    #[default]
    FirstPerWriter,
    /// First `n` genuine specimens regardless of writer.
    FirstN,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionRule::FirstPerWriter => "first-per-writer",
            SelectionRule::FirstN => "first-n",
        })
    }
}

impl FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-per-writer" => Ok(SelectionRule::FirstPerWriter),
            "first-n" => Ok(SelectionRule::FirstN),
            other => Err(Error::UnknownSelectionRule(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    origin: Origin,
    channels: Vec<Channel>,
    size: usize,
    provenance: String,
}

/// Immutable background model. Members are shared, so views produced by
/// [`UniverseModel::exclude_writer`] are cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseModel {
    members: Vec<Arc<FeatureSet>>,
    origin: Origin,
    channels: BTreeSet<Channel>,
    provenance: String,
}

impl UniverseModel {
    /// Wraps an explicit member list; every member must carry every channel.
    pub fn new(
        members: Vec<FeatureSet>,
        channels: impl IntoIterator<Item = Channel>,
        origin: Origin,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let channels: BTreeSet<Channel> = channels.into_iter().collect();
        let members = members
            .into_iter()
            .map(|m| {
                let list: Vec<Channel> = channels.iter().cloned().collect();
                m.restricted(&list).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        if members.len() < 2 {
            return Err(Error::UniverseTooSmall(members.len()));
        }
        Ok(Self {
            members,
            origin,
            channels,
            provenance: provenance.into(),
        })
    }

    pub fn members(&self) -> &[Arc<FeatureSet>] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn channels(&self) -> &BTreeSet<Channel> {
        &self.channels
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn contains_writer(&self, writer_id: &str) -> bool {
        self.members.iter().any(|m| m.writer_id == writer_id)
    }

    /// A copy without any member of `writer_id`. The receiver is untouched.
    pub fn exclude_writer(&self, writer_id: &str) -> Result<UniverseModel> {
        let members: Vec<_> = self
            .members
            .iter()
            .filter(|m| m.writer_id != writer_id)
            .cloned()
            .collect();
        if members.len() < 2 {
            return Err(Error::UniverseTooSmall(members.len()));
        }
        Ok(UniverseModel {
            members,
            ..self.clone()
        })
    }

    /// The first `n` members, as if the model had been built with size `n`.
    pub fn truncated(&self, n: usize) -> Result<UniverseModel> {
        if n < 2 {
            return Err(Error::UniverseTooSmall(n));
        }
        if n > self.size() {
            return Err(Error::InsufficientCorpus {
                requested: n,
                available: self.size(),
            });
        }
        Ok(UniverseModel {
            members: self.members[..n].to_vec(),
            provenance: format!("{} [first {n}]", self.provenance),
            ..self.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::IoFailure {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| match e {
            Error::Io(e) => io(e),
            other => other,
        })?;
        w.flush().map_err(io)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            schema_version: SCHEMA_VERSION,
            origin: self.origin,
            channels: self.channels.iter().cloned().collect(),
            size: self.size(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for m in &self.members {
            for c in &self.channels {
                let v = m.require(c)?;
                serde_json::to_writer(&mut w, &FeatureRecord::from_vector(m, v))?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::IoFailure {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::read_from(BufReader::new(file)).map_err(|e| match e {
            Error::IoFailure { reason, .. } => Error::IoFailure {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let failure = |reason: String| Error::IoFailure {
            path: Default::default(),
            reason,
        };
        let mut first = String::new();
        r.read_line(&mut first).map_err(|e| failure(e.to_string()))?;
        // peek at the version before the full header so newer files fail clearly
        let raw: serde_json::Value =
            serde_json::from_str(&first).map_err(|e| failure(format!("bad header: {e}")))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| failure("header lacks schema_version".into()))? as u32;
        if version != SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch {
                found: version,
                supported: SCHEMA_VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| failure(format!("bad header: {e}")))?;
        let sets = ingest_external(r).map_err(|e| failure(e.to_string()))?;
        if sets.len() != header.size {
            return Err(failure(format!(
                "header declares {} members, file holds {}",
                header.size,
                sets.len()
            )));
        }
        let model = Self::new(sets, header.channels, header.origin, header.provenance)
            .map_err(|e| failure(e.to_string()))?;
        Ok(model)
    }
}

/// Selects UBM members from feature sets given in corpus order.
pub fn build_ubm_from_sets(
    sets: &[FeatureSet],
    n: usize,
    rule: SelectionRule,
    channels: &[Channel],
    origin: Origin,
    dataset: &str,
) -> Result<UniverseModel> {
    if n < 2 {
        return Err(Error::UniverseTooSmall(n));
    }
    let genuine = sets.iter().filter(|s| s.label == Label::Genuine);
    let selected: Vec<&FeatureSet> = match rule {
        SelectionRule::FirstN => genuine.take(n).collect(),
        SelectionRule::FirstPerWriter => {
            let mut seen: HashMap<&str, ()> = HashMap::new();
            genuine
                .filter(|s| seen.insert(&s.writer_id, ()).is_none())
                .take(n)
                .collect()
        }
    };
    if selected.len() < n {
        return Err(Error::InsufficientCorpus {
            requested: n,
            available: selected.len(),
        });
    }
    let members = selected
        .into_iter()
        .map(|s| s.restricted(channels))
        .collect::<Result<Vec<_>>>()?;
    UniverseModel::new(
        members,
        channels.iter().cloned(),
        origin,
        format!("{dataset}; {rule} n={n}"),
    )
}

/// Selects UBM members following the manifest's entry order.
pub fn build_ubm(
    manifest: &CorpusManifest,
    store: &FeatureStore,
    n: usize,
    rule: SelectionRule,
    channels: &[Channel],
    origin: Origin,
) -> Result<UniverseModel> {
    let ordered = manifest
        .entries
        .iter()
        .filter(|e| e.label == Label::Genuine)
        .map(|e| {
            store
                .get(&e.writer_id, e.specimen, e.label)
                .cloned()
                .ok_or_else(|| Error::MissingFeatures {
                    writer_id: e.writer_id.clone(),
                    specimen: e.specimen,
                    label: e.label,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    build_ubm_from_sets(&ordered, n, rule, channels, origin, &manifest.dataset_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use proptest::prelude::*;

    fn ext() -> Channel {
        Channel::Ext("x".into())
    }

    fn set(writer: &str, specimen: u32, label: Label, v: f64) -> FeatureSet {
        FeatureSet::new(writer, specimen, label)
            .with(FeatureVector::new(ext(), vec![v, v * 2.0]).unwrap())
            .unwrap()
    }

    fn corpus(writers: usize, per_writer: u32) -> Vec<FeatureSet> {
        let mut out = Vec::new();
        for w in 0..writers {
            for s in 1..=per_writer {
                out.push(set(&format!("w{w:03}"), s, Label::Genuine, (w * 10 + s as usize) as f64));
                out.push(set(&format!("w{w:03}"), s, Label::Forgery, -1.0));
            }
        }
        out
    }

    fn build(sets: &[FeatureSet], n: usize, rule: SelectionRule) -> Result<UniverseModel> {
        build_ubm_from_sets(sets, n, rule, &[ext()], Origin::Real, "toy")
    }

    #[test]
    fn minimal_ubm() {
        let sets = vec![set("a", 1, Label::Genuine, 1.0), set("b", 1, Label::Genuine, 2.0)];
        assert_eq!(build(&sets, 2, SelectionRule::FirstPerWriter).unwrap().size(), 2);
    }

    #[test]
    fn first_per_writer_takes_one_each() {
        let sets = corpus(960, 2);
        let u = build(&sets, 300, SelectionRule::FirstPerWriter).unwrap();
        assert_eq!(u.size(), 300);
        for (i, m) in u.members().iter().enumerate() {
            assert_eq!(m.writer_id, format!("w{i:03}"));
            assert_eq!(m.specimen_index, 1);
            assert_eq!(m.label, Label::Genuine);
        }
        let first_n = build(&sets, 300, SelectionRule::FirstN).unwrap();
        assert_eq!(first_n.members()[1].writer_id, "w000");
        assert!(first_n.members().iter().all(|m| m.label == Label::Genuine));
    }

    #[test]
    fn too_small_corpus() {
        let sets = corpus(50, 2);
        assert!(matches!(
            build(&sets, 300, SelectionRule::FirstN),
            Err(Error::InsufficientCorpus { requested: 300, available: 100 })
        ));
        assert!(matches!(build(&sets, 1, SelectionRule::FirstN), Err(Error::UniverseTooSmall(1))));
    }

    #[test]
    fn missing_channel_is_reported() {
        let sets = corpus(3, 1);
        let err = build_ubm_from_sets(&sets, 2, SelectionRule::FirstN, &[Channel::G], Origin::Real, "t")
            .unwrap_err();
        assert!(matches!(err, Error::MissingChannel { .. }));
    }

    #[test]
    fn deterministic_construction() {
        let sets = corpus(20, 3);
        assert_eq!(
            build(&sets, 10, SelectionRule::FirstPerWriter).unwrap(),
            build(&sets, 10, SelectionRule::FirstPerWriter).unwrap()
        );
    }

    #[test]
    fn exclude_writer_cases() {
        let sets = corpus(3, 1);
        let u = build(&sets, 3, SelectionRule::FirstPerWriter).unwrap();
        assert_eq!(u.exclude_writer("nobody").unwrap(), u);
        let v = u.exclude_writer("w001").unwrap();
        assert_eq!(v.size(), 2);
        assert!(!v.contains_writer("w001"));
        // snapshot semantics
        assert_eq!(u.size(), 3);
        assert!(matches!(v.exclude_writer("w000"), Err(Error::UniverseTooSmall(1))));
    }

    #[test]
    fn future_schema_rejected() {
        let text = "{\"schema_version\":2,\"origin\":\"real\",\"channels\":[],\"size\":0,\"provenance\":\"\"}\n";
        assert!(matches!(
            UniverseModel::read_from(text.as_bytes()),
            Err(Error::SchemaVersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let u = build(&corpus(5, 1), 5, SelectionRule::FirstPerWriter).unwrap();
        let mut buf = Vec::new();
        u.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut_line = &text[..text.len() - 20];
        assert!(matches!(UniverseModel::read_from(cut_line.as_bytes()), Err(Error::IoFailure { .. })));
        let lines: Vec<&str> = text.lines().collect();
        let short = lines[..lines.len() - 1].join("\n");
        assert!(matches!(UniverseModel::read_from(short.as_bytes()), Err(Error::IoFailure { .. })));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            UniverseModel::load(&dir.path().join("absent.sig")),
            Err(Error::IoFailure { .. })
        ));
    }

    #[test]
    fn truncation_matches_smaller_build() {
        let sets = corpus(30, 2);
        let big = build(&sets, 30, SelectionRule::FirstPerWriter).unwrap();
        let small = build(&sets, 12, SelectionRule::FirstPerWriter).unwrap();
        assert_eq!(big.truncated(12).unwrap().members(), small.members());
    }

    proptest! {
        #[test]
        fn save_load_is_lossless(values in prop::collection::vec(prop::num::f64::NORMAL, 4..20)) {
            let sets: Vec<FeatureSet> = values
                .chunks(2)
                .enumerate()
                .map(|(i, c)| {
                    FeatureSet::new(format!("w{i}"), 1, Label::Genuine)
                        .with(FeatureVector::new(ext(), c.to_vec()).unwrap())
                        .unwrap()
                })
                .filter(|s| s.get(&ext()).unwrap().dim() == 2)
                .collect();
            prop_assume!(sets.len() >= 2);
            let u = UniverseModel::new(sets, [ext()], Origin::Synthetic, "prop").unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("u.sig");
            u.save(&path).unwrap();
            let back = UniverseModel::load(&path).unwrap();
            prop_assert_eq!(&back, &u);
            for (a, b) in back.members().iter().zip(u.members()) {
                let (va, vb) = (a.get(&ext()).unwrap().values(), b.get(&ext()).unwrap().values());
                prop_assert!(va.iter().zip(vb).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}
