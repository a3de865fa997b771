//! UBM registry and the evaluation pipeline behind `evaluate_case`.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigproof_core::corpus::{load_image_bytes, preprocess, Label, PreprocessConfig};
use sigproof_core::evidence::{Enrollment, EvidenceReport, UbmIndex};
use sigproof_core::features::{extract, Channel, FeatureConfig, FeatureSet};
use sigproof_core::ubm::{Origin, UniverseModel};
use sigproof_core::Execution;

use crate::error::{ApiError, ApiResult};
use crate::store::{Case, SpecimenRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UbmDescriptor {
    pub ubm_id: String,
    pub origin: Origin,
    pub size: usize,
    pub channels: Vec<Channel>,
    pub provenance: String,
}

/// Read-only UBMs loaded at startup, with their distance caches.
#[derive(Default)]
pub struct UbmRegistry {
    ubms: BTreeMap<String, Arc<UbmIndex>>,
}

impl UbmRegistry {
    /// Loads every `*.jsonl` file in `dir`; the file stem is the UBM id.
    pub fn load_dir(dir: &Path) -> sigproof_core::Result<Self> {
        let mut reg = Self::default();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path.file_stem().expect("has extension").to_string_lossy().into_owned();
            reg.insert(id, UniverseModel::load(&path)?);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, ubm_id: impl Into<String>, ubm: UniverseModel) {
        self.ubms.insert(ubm_id.into(), Arc::new(UbmIndex::new(ubm)));
    }

    pub fn get(&self, ubm_id: &str) -> Option<&Arc<UbmIndex>> {
        self.ubms.get(ubm_id)
    }

    pub fn default_id(&self) -> Option<&str> {
        self.ubms.keys().next().map(String::as_str)
    }

    pub fn describe(&self) -> Vec<UbmDescriptor> {
        self.ubms
            .iter()
            .map(|(id, index)| {
                let ubm = index.ubm();
                UbmDescriptor {
                    ubm_id: id.clone(),
                    origin: ubm.origin(),
                    size: ubm.size(),
                    channels: ubm.channels().iter().cloned().collect(),
                    provenance: ubm.provenance().into(),
                }
            })
            .collect()
    }
}

/// Small map that forgets everything once full; entries are cheap to rebuild.
struct Memo<K, V> {
    map: Mutex<HashMap<K, Arc<V>>>,
    capacity: usize,
}

impl<K: Hash + Eq, V> Memo<K, V> {
    fn new(capacity: usize) -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
            capacity,
        }
    }

    fn get_or_try<E>(&self, key: K, f: impl FnOnce() -> Result<V, E>) -> Result<Arc<V>, E> {
        if let Some(v) = self.map.lock().expect("cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(f()?);
        let mut map = self.map.lock().expect("cache poisoned");
        if map.len() >= self.capacity {
            map.clear();
        }
        Ok(map.entry(key).or_insert(v).clone())
    }

    fn len(&self) -> usize {
        self.map.lock().expect("cache poisoned").len()
    }
}

pub struct Engine {
    pub registry: UbmRegistry,
    preprocess: PreprocessConfig,
    features: FeatureConfig,
    exec: Execution,
    feature_cache: Memo<(String, Vec<Channel>), FeatureSet>,
    enrollment_cache: Memo<String, Enrollment>,
}

impl Engine {
    pub fn new(registry: UbmRegistry, preprocess: PreprocessConfig, features: FeatureConfig) -> Self {
        Self {
            registry,
            preprocess,
            features,
            exec: Execution::default(),
            feature_cache: Memo::new(1024),
            enrollment_cache: Memo::new(64),
        }
    }

    /// Features of one uploaded image, cached by content hash.
    fn featurize(&self, record: &SpecimenRecord, bytes: &[u8], channels: &[Channel]) -> ApiResult<FeatureSet> {
        let cached = self.feature_cache.get_or_try((record.sha256.clone(), channels.to_vec()), || {
            let img = load_image_bytes(bytes)?;
            extract(&preprocess(&img, &self.preprocess)?, channels, &self.features)
        })?;
        let mut set = (*cached).clone();
        set.writer_id = record.role.as_str().into();
        set.specimen_index = record.ordinal;
        set.label = Label::Genuine;
        Ok(set)
    }

    pub fn cached_enrollments(&self) -> usize {
        self.enrollment_cache.len()
    }

    /// Preprocessing, extraction and verification for a case. `image` reads
    /// the stored bytes of a specimen.
    pub fn evaluate(
        &self,
        case: &Case,
        image: impl Fn(&SpecimenRecord) -> ApiResult<Vec<u8>>,
    ) -> ApiResult<EvidenceReport> {
        let questioned = case.questioned.as_ref().ok_or(ApiError::MissingQuestioned)?;
        if case.references.is_empty() {
            return Err(ApiError::NoReferences);
        }
        let ubm_id = case
            .config
            .ubm_id
            .as_deref()
            .or(self.registry.default_id())
            .ok_or_else(|| ApiError::UbmNotLoaded("<none>".into()))?;
        let index = self.registry.get(ubm_id).ok_or_else(|| ApiError::UbmNotLoaded(ubm_id.into()))?;
        case.config.validate()?;
        let cfg = case.config.evidence_config();
        let channels = &cfg.channels;

        let q = self.featurize(questioned, &image(questioned)?, channels)?;
        let refs = case
            .references
            .iter()
            .map(|r| self.featurize(r, &image(r)?, channels))
            .collect::<ApiResult<Vec<_>>>()?;

        let mut fingerprint = Sha256::new();
        fingerprint.update(ubm_id.as_bytes());
        fingerprint.update(serde_json::to_vec(&cfg)?);
        for r in &case.references {
            fingerprint.update(r.sha256.as_bytes());
            fingerprint.update(r.ordinal.to_le_bytes());
        }
        let key = hex::encode(fingerprint.finalize());
        let enrollment = self
            .enrollment_cache
            .get_or_try(key, || Enrollment::prepare(index, &refs, None, &cfg, self.exec))?;
        Ok(enrollment.score(&q)?)
    }
}
