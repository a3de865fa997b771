//! JSON-lines feature exchange format.
//!
//! One object per line:
//! `{"writer_id": "...", "specimen": 3, "label": "genuine", "channel": "qt",
//!   "dim": 200, "values": [...]}`.
//! Records of the same specimen are grouped into one [`FeatureSet`], in order
//! of first appearance.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Channel, FeatureSet, FeatureVector, SpecimenKey};
use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub writer_id: String,
    pub specimen: u32,
    pub label: Label,
    pub channel: Channel,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FeatureRecord {
    pub fn from_vector(set: &FeatureSet, v: &FeatureVector) -> Self {
        Self {
            writer_id: set.writer_id.clone(),
            specimen: set.specimen_index,
            label: set.label,
            channel: v.channel().clone(),
            dim: v.dim(),
            values: v.values().to_vec(),
        }
    }
}

/// Parses a feature stream, validating that each channel keeps one
/// dimension throughout. Blank lines are skipped.
pub fn ingest_external<R: BufRead>(reader: R) -> Result<Vec<FeatureSet>> {
    let mut sets: Vec<FeatureSet> = Vec::new();
    let mut index: HashMap<SpecimenKey, usize> = HashMap::new();
    let mut dims: HashMap<Channel, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            line: line_no,
            reason,
        };
        let rec: FeatureRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if rec.dim != rec.values.len() {
            return Err(malformed(format!(
                "dim {} but {} values",
                rec.dim,
                rec.values.len()
            )));
        }
        let expected = *dims.entry(rec.channel.clone()).or_insert(rec.dim);
        if expected != rec.dim {
            return Err(Error::DimMismatch {
                channel: rec.channel,
                expected,
                actual: rec.dim,
            });
        }
        let vector = FeatureVector::new(rec.channel, rec.values).map_err(|e| match e {
            e @ Error::DimMismatch { .. } => e,
            other => malformed(other.to_string()),
        })?;
        let key = SpecimenKey {
            writer_id: rec.writer_id,
            specimen: rec.specimen,
            label: rec.label,
        };
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            sets.push(FeatureSet::new(key.writer_id, key.specimen, key.label));
            sets.len() - 1
        });
        sets[slot].insert(vector).map_err(|e| match e {
            Error::MalformedRecord { reason, .. } => malformed(reason),
            other => other,
        })?;
    }
    Ok(sets)
}

pub fn write_feature_sets<W: Write>(mut writer: W, sets: &[FeatureSet]) -> Result<()> {
    for set in sets {
        for v in set.vectors() {
            serde_json::to_writer(&mut writer, &FeatureRecord::from_vector(set, v))?;
            writer.write_all(b"\n")?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureSet>> {
    let file = std::fs::File::open(path).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    ingest_external(BufReader::new(file))
}

pub fn write_feature_file(path: &Path, sets: &[FeatureSet]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_feature_sets(BufWriter::new(file), sets)
}
