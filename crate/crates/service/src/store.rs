//! File-backed case store: `<data>/cases/<case_id>/case.json` plus one image
//! file per specimen.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sigproof_core::distances::MetricId;
use sigproof_core::evidence::{EvidenceConfig, EvidenceReport, ProbMode, WeightSpec};
use sigproof_core::features::Channel;
use tokio::sync::OwnedMutexGuard;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Questioned,
    Reference,
}

impl std::str::FromStr for Role {
    type Err = ApiError;

    fn from_str(s: &str) -> ApiResult<Self> {
        match s {
            "questioned" => Ok(Role::Questioned),
            "reference" => Ok(Role::Reference),
            other => Err(ApiError::InvalidRole(other.into())),
        }
    }
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Questioned => "questioned",
            Role::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseConfig {
    pub metric: MetricId,
    pub channels: Vec<Channel>,
    pub weights: WeightSpec,
    pub ubm_id: Option<String>,
    pub prob_mode: ProbMode,
}

impl Default for CaseConfig {
    fn default() -> Self {
        let e = EvidenceConfig::default();
        Self {
            metric: e.metric,
            channels: e.channels,
            weights: e.weights,
            ubm_id: None,
            prob_mode: e.prob_mode,
        }
    }
}

impl CaseConfig {
    pub fn evidence_config(&self) -> EvidenceConfig {
        EvidenceConfig {
            metric: self.metric,
            channels: self.channels.clone(),
            weights: self.weights.clone(),
            prob_mode: self.prob_mode,
            ..EvidenceConfig::default()
        }
    }

    /// Checks what can be checked without a UBM.
    pub fn validate(&self) -> ApiResult<()> {
        if self.channels.is_empty() {
            return Err(ApiError::InvalidConfig("at least one channel is required".into()));
        }
        if let Some(c) = self.channels.iter().find(|c| c.is_external()) {
            return Err(ApiError::InvalidConfig(format!(
                "channel {c} is ingested externally and cannot be computed from an uploaded image"
            )));
        }
        let mut seen = self.channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return Err(ApiError::InvalidConfig("channels are listed twice".into()));
        }
        self.weights.resolve(&self.channels)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenRecord {
    pub specimen_id: String,
    pub role: Role,
    /// Per-case upload counter; becomes the specimen index in reports.
    pub ordinal: u32,
    pub file: String,
    pub sha256: String,
    pub width: u32,
    pub height: u32,
    pub bytes: usize,
}

/// Persisted case record. Timestamps are Unix milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub questioned: Option<SpecimenRecord>,
    pub references: Vec<SpecimenRecord>,
    pub config: CaseConfig,
    pub created_at: u64,
    pub updated_at: u64,
    /// Incremented by every mutation; the workbench's staleness token.
    pub case_version: u64,
    pub next_ordinal: u32,
    pub last_report: Option<EvidenceReport>,
}

impl Case {
    /// Records a mutation: bumps the version and drops the stale report.
    pub fn touch(&mut self) {
        self.case_version += 1;
        self.updated_at = now_ms().max(self.updated_at);
        self.last_report = None;
    }

    pub fn specimen(&self, specimen_id: &str) -> Option<&SpecimenRecord> {
        self.questioned
            .iter()
            .chain(&self.references)
            .find(|s| s.specimen_id == specimen_id)
    }
}

/// Case listing without the report body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case_id: String,
    pub questioned: Option<SpecimenRecord>,
    pub references: Vec<SpecimenRecord>,
    pub config: CaseConfig,
    pub created_at: u64,
    pub updated_at: u64,
    pub case_version: u64,
    pub has_report: bool,
}

impl From<&Case> for CaseView {
    fn from(c: &Case) -> Self {
        Self {
            case_id: c.case_id.clone(),
            questioned: c.questioned.clone(),
            references: c.references.clone(),
            config: c.config.clone(),
            created_at: c.created_at,
            updated_at: c.updated_at,
            case_version: c.case_version,
            has_report: c.last_report.is_some(),
        }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric())
}

pub struct CaseStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl CaseStore {
    pub fn open(data_dir: &Path) -> ApiResult<Self> {
        let root = data_dir.join("cases");
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    fn dir(&self, case_id: &str) -> ApiResult<PathBuf> {
        if !valid_id(case_id) {
            return Err(ApiError::CaseNotFound(case_id.into()));
        }
        Ok(self.root.join(case_id))
    }

    /// Exclusive lock serialising every access that mutates `case_id`.
    pub async fn lock(&self, case_id: &str) -> OwnedMutexGuard<()> {
        let lock = {
            let mut map = self.locks.lock().expect("lock table poisoned");
            map.entry(case_id.to_string()).or_default().clone()
        };
        lock.lock_owned().await
    }

    pub fn create(&self, config: CaseConfig) -> ApiResult<Case> {
        let case_id = loop {
            let id = hex::encode(rand::random::<[u8; 12]>());
            if !self.root.join(&id).exists() {
                break id;
            }
        };
        std::fs::create_dir_all(self.root.join(&case_id))?;
        let now = now_ms();
        let case = Case {
            case_id,
            questioned: None,
            references: Vec::new(),
            config,
            created_at: now,
            updated_at: now,
            case_version: 0,
            next_ordinal: 1,
            last_report: None,
        };
        self.save(&case)?;
        Ok(case)
    }

    pub fn load(&self, case_id: &str) -> ApiResult<Case> {
        let path = self.dir(case_id)?.join("case.json");
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ApiError::CaseNotFound(case_id.into())),
            Err(e) => return Err(e.into()),
        };
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes the record through a temporary file so readers never see a
    /// partial one.
    pub fn save(&self, case: &Case) -> ApiResult<()> {
        let dir = self.dir(&case.case_id)?;
        let tmp = dir.join("case.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(case)?)?;
        std::fs::rename(&tmp, dir.join("case.json"))?;
        Ok(())
    }

    pub fn write_image(&self, case_id: &str, file: &str, bytes: &[u8]) -> ApiResult<()> {
        std::fs::write(self.dir(case_id)?.join(file), bytes)?;
        Ok(())
    }

    pub fn read_image(&self, case_id: &str, file: &str) -> ApiResult<Vec<u8>> {
        Ok(std::fs::read(self.dir(case_id)?.join(file))?)
    }

    pub fn remove_image(&self, case_id: &str, file: &str) -> ApiResult<()> {
        match std::fs::remove_file(self.dir(case_id)?.join(file)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = CaseStore::open(dir.path()).unwrap();
        let mut case = store.create(CaseConfig::default()).unwrap();
        assert_eq!(store.load(&case.case_id).unwrap(), case);
        case.touch();
        store.save(&case).unwrap();
        assert_eq!(store.load(&case.case_id).unwrap().case_version, 1);
    }

    #[test]
    fn hostile_ids_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = CaseStore::open(dir.path()).unwrap();
        for id in ["../etc", "a/b", "", "deadbeef"] {
            assert!(matches!(store.load(id), Err(ApiError::CaseNotFound(_))), "{id}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(CaseConfig::default().validate().is_ok());
        let mut c = CaseConfig {
            channels: vec![Channel::Ext("d1".into())],
            ..CaseConfig::default()
        };
        assert!(matches!(c.validate(), Err(ApiError::InvalidConfig(_))));
        c.channels = vec![];
        assert!(matches!(c.validate(), Err(ApiError::InvalidConfig(_))));
        c.channels = vec![Channel::G, Channel::G];
        assert!(matches!(c.validate(), Err(ApiError::InvalidConfig(_))));
        c.channels = vec![Channel::G];
        c.weights = WeightSpec::DefaultDl;
        assert!(matches!(c.validate(), Err(ApiError::Pipeline(_))));
    }
}
