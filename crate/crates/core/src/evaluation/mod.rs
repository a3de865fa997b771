//! Evaluation protocol: per-writer enrollment, genuine and impostor trials
//! under random-forgery (RF) and skilled-forgery (SF) scenarios, DET curves,
//! EER and parameter sweeps.
//!
//! Each writer enrolls its first `n_refs` genuine specimens (by specimen
//! index) and questions the rest. RF impostors are one uniformly chosen
//! genuine specimen from each of up to 74 other writers, drawn without
//! replacement with a per-writer seeded generator. SF impostors are all the
//! writer's forgeries. The enrolled writer never appears in its own UBM.

mod det;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use det::{det_curve, eer, save_det_csv, write_det_csv, DetCurve, DetPoint};
pub use sweep::{
    run_sweep, write_results_csv, CellOutcome, CellResult, ChannelSet, SweepConfig, SweepResult, CSV_COLUMNS,
};

use crate::corpus::{CorpusManifest, Label};
use crate::distances::MetricId;
use crate::error::{Error, Result};
use crate::evidence::{Enrollment, EvidenceConfig, ProbMode, UbmIndex, WeightSpec};
use crate::exec::Execution;
use crate::features::{Channel, FeatureSet, FeatureStore, SpecimenKey};

/// Default number of other writers drawn for random-forgery trials.
pub const RF_IMPOSTOR_WRITERS: usize = 74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "rf")]
    RandomForgery,
    #[serde(rename = "sf")]
    SkilledForgery,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::RandomForgery => "rf",
            Scenario::SkilledForgery => "sf",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rf" | "random" | "random_forgery" => Ok(Scenario::RandomForgery),
            "sf" | "skilled" | "skilled_forgery" => Ok(Scenario::SkilledForgery),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// One evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub scenario: Scenario,
    pub n_refs: usize,
    pub metric: MetricId,
    pub channels: Vec<Channel>,
    pub weights: WeightSpec,
    pub ubm_id: String,
    /// Use only the first `n` UBM members; `None` uses all of them.
    pub ubm_size: Option<usize>,
    pub rng_seed: u64,
    pub rf_impostor_writers: usize,
    pub prob_mode: ProbMode,
}

impl Protocol {
    pub fn evidence_config(&self) -> EvidenceConfig {
        EvidenceConfig {
            metric: self.metric,
            channels: self.channels.clone(),
            weights: self.weights.clone(),
            prob_mode: self.prob_mode,
            ..EvidenceConfig::default()
        }
    }
}

/// Specimens of one writer, each list sorted by specimen index.
#[derive(Debug, Clone, Default)]
pub struct WriterSpecimens {
    pub genuine: Vec<FeatureSet>,
    pub forgeries: Vec<FeatureSet>,
}

/// Feature sets grouped by writer, writers in lexicographic order.
#[derive(Debug, Clone, Default)]
pub struct EvalCorpus {
    writers: BTreeMap<String, WriterSpecimens>,
}

impl EvalCorpus {
    pub fn from_sets(sets: impl IntoIterator<Item = FeatureSet>) -> Result<Self> {
        let mut writers: BTreeMap<String, WriterSpecimens> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for s in sets {
            if !seen.insert(s.key()) {
                return Err(Error::DuplicateEntry {
                    writer_id: s.writer_id.clone(),
                    specimen: s.specimen_index,
                    label: s.label,
                });
            }
            let w = writers.entry(s.writer_id.clone()).or_default();
            match s.label {
                Label::Genuine => w.genuine.push(s),
                Label::Forgery => w.forgeries.push(s),
            }
        }
        for w in writers.values_mut() {
            w.genuine.sort_by_key(|s| s.specimen_index);
            w.forgeries.sort_by_key(|s| s.specimen_index);
        }
        Ok(Self { writers })
    }

    /// Joins manifest entries with their features; every entry must have some.
    pub fn from_manifest(manifest: &CorpusManifest, store: &FeatureStore) -> Result<Self> {
        let sets = manifest
            .entries
            .iter()
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
        Self::from_sets(sets)
    }

    pub fn writers(&self) -> impl Iterator<Item = (&String, &WriterSpecimens)> {
        self.writers.iter()
    }

    pub fn writer_ids(&self) -> Vec<&str> {
        self.writers.keys().map(String::as_str).collect()
    }

    pub fn get(&self, writer_id: &str) -> Option<&WriterSpecimens> {
        self.writers.get(writer_id)
    }

    pub fn len(&self) -> usize {
        self.writers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.writers.is_empty()
    }
}

/// First `n_refs` genuine specimens (by index) as references, the rest as
/// questioned.
pub fn split_enrollment(genuine: &[FeatureSet], n_refs: usize) -> Result<(Vec<FeatureSet>, Vec<FeatureSet>)> {
    if n_refs == 0 {
        return Err(Error::NoReferences);
    }
    let mut sorted = genuine.to_vec();
    sorted.sort_by_key(|s| s.specimen_index);
    if sorted.len() <= n_refs {
        return Err(Error::InsufficientGenuine {
            writer_id: sorted.first().map(|s| s.writer_id.clone()).unwrap_or_default(),
            available: sorted.len(),
            n_refs,
        });
    }
    let questioned = sorted.split_off(n_refs);
    Ok((sorted, questioned))
}

/// Impostor trials for one writer, with the RF shortfall when fewer than
/// the requested number of other writers exist.
#[derive(Debug, Clone)]
pub struct ImpostorDraw {
    pub trials: Vec<FeatureSet>,
    pub clamped_to: Option<usize>,
}

/// Stable per-writer seed: the run seed mixed with a hash of the writer id.
fn writer_seed(seed: u64, writer_id: &str) -> u64 {
    let digest = Sha256::digest(writer_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

pub fn impostor_trials(
    scenario: Scenario,
    writer_id: &str,
    corpus: &EvalCorpus,
    seed: u64,
    rf_writers: usize,
) -> Result<ImpostorDraw> {
    match scenario {
        Scenario::SkilledForgery => {
            let forgeries = corpus.get(writer_id).map(|w| w.forgeries.clone()).unwrap_or_default();
            if forgeries.is_empty() {
                return Err(Error::InsufficientImpostors(writer_id.to_string()));
            }
            Ok(ImpostorDraw {
                trials: forgeries,
                clamped_to: None,
            })
        }
        Scenario::RandomForgery => {
            let others: Vec<&WriterSpecimens> = corpus
                .writers()
                .filter(|(id, w)| id.as_str() != writer_id && !w.genuine.is_empty())
                .map(|(_, w)| w)
                .collect();
            if others.is_empty() {
                return Err(Error::InsufficientImpostors(writer_id.to_string()));
            }
            let k = rf_writers.min(others.len());
            let mut rng = ChaCha8Rng::seed_from_u64(writer_seed(seed, writer_id));
            let picked = sample(&mut rng, others.len(), k);
            let trials = picked
                .iter()
                .map(|i| {
                    let g = &others[i].genuine;
                    g[rng.random_range(0..g.len())].clone()
                })
                .collect();
            Ok(ImpostorDraw {
                trials,
                clamped_to: (k < rf_writers).then_some(k),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub writer_id: String,
    pub questioned: SpecimenKey,
    pub score: f64,
}

/// Scores of one protocol, trials ordered by writer then presentation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialScores {
    pub genuine: Vec<Trial>,
    pub impostor: Vec<Trial>,
    pub n_writers: usize,
    /// Writers whose RF draw was clamped, with the number actually drawn.
    pub clamped: Vec<(String, usize)>,
}

impl TrialScores {
    pub fn genuine_scores(&self) -> Vec<f64> {
        self.genuine.iter().map(|t| t.score).collect()
    }

    pub fn impostor_scores(&self) -> Vec<f64> {
        self.impostor.iter().map(|t| t.score).collect()
    }
}

struct WriterScores {
    genuine: Vec<Trial>,
    impostor: BTreeMap<Scenario, (Vec<Trial>, Option<usize>)>,
}

/// Scores one writer for several scenarios sharing the same enrollment.
#[allow(clippy::too_many_arguments)]
fn score_writer(
    writer_id: &str,
    specimens: &WriterSpecimens,
    corpus: &EvalCorpus,
    index: &UbmIndex,
    cfg: &EvidenceConfig,
    scenarios: &[Scenario],
    n_refs: usize,
    ubm_size: Option<usize>,
    seed: u64,
    rf_writers: usize,
    exec: Execution,
) -> Result<WriterScores> {
    let (refs, questioned) = split_enrollment(&specimens.genuine, n_refs).map_err(|e| match e {
        Error::InsufficientGenuine { available, n_refs, .. } => Error::InsufficientGenuine {
            writer_id: writer_id.to_string(),
            available,
            n_refs,
        },
        other => other,
    })?;
    let enrollment = Enrollment::prepare_limited(index, &refs, Some(writer_id), ubm_size, cfg, exec)?;
    let trial = |q: &FeatureSet| -> Result<Trial> {
        Ok(Trial {
            writer_id: writer_id.to_string(),
            questioned: q.key(),
            score: enrollment.fused_score(q)?,
        })
    };
    let genuine = questioned.iter().map(trial).collect::<Result<Vec<_>>>()?;
    let mut impostor = BTreeMap::new();
    for &scenario in scenarios {
        let draw = impostor_trials(scenario, writer_id, corpus, seed, rf_writers)?;
        let trials = draw.trials.iter().map(trial).collect::<Result<Vec<_>>>()?;
        impostor.insert(scenario, (trials, draw.clamped_to));
    }
    Ok(WriterScores { genuine, impostor })
}

/// Scores every writer for each scenario in `scenarios`, sharing
/// enrollments. Writers run in parallel and results are gathered in writer
/// order, so the output does not depend on the execution mode.
#[allow(clippy::too_many_arguments)]
pub fn score_scenarios(
    scenarios: &[Scenario],
    n_refs: usize,
    cfg: &EvidenceConfig,
    ubm_size: Option<usize>,
    seed: u64,
    rf_writers: usize,
    corpus: &EvalCorpus,
    index: &UbmIndex,
    exec: Execution,
) -> Result<BTreeMap<Scenario, TrialScores>> {
    // fill the distance caches before fanning out over writers
    for c in &cfg.channels {
        index.matrix(c, cfg.metric, exec)?;
    }
    let writers: Vec<(&String, &WriterSpecimens)> = corpus.writers().collect();
    let per_writer = exec.try_map(&writers, |(id, specimens)| {
        score_writer(
            id, specimens, corpus, index, cfg, scenarios, n_refs, ubm_size, seed, rf_writers, exec,
        )
    })?;
    let mut out: BTreeMap<Scenario, TrialScores> = BTreeMap::new();
    for ((id, _), ws) in writers.iter().zip(per_writer) {
        for (scenario, (trials, clamp)) in ws.impostor {
            let entry = out.entry(scenario).or_default();
            entry.n_writers += 1;
            entry.genuine.extend(ws.genuine.iter().cloned());
            entry.impostor.extend(trials);
            if let Some(k) = clamp {
                entry.clamped.push((id.to_string(), k));
            }
        }
    }
    Ok(out)
}

/// Genuine and impostor scores for one protocol.
pub fn score_trials(protocol: &Protocol, corpus: &EvalCorpus, index: &UbmIndex, exec: Execution) -> Result<TrialScores> {
    if protocol.n_refs == 0 {
        return Err(Error::NoReferences);
    }
    let mut by = score_scenarios(
        &[protocol.scenario],
        protocol.n_refs,
        &protocol.evidence_config(),
        protocol.ubm_size,
        protocol.rng_seed,
        protocol.rf_impostor_writers,
        corpus,
        index,
        exec,
    )?;
    Ok(by.remove(&protocol.scenario).unwrap_or_default())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub protocol: Protocol,
    pub det: DetCurve,
    pub eer: f64,
    pub n_genuine_trials: usize,
    pub n_impostor_trials: usize,
    pub n_writers: usize,
    pub clamped: Vec<(String, usize)>,
    pub wall_time: f64,
}

impl ExperimentResult {
    pub fn from_scores(protocol: Protocol, scores: &TrialScores, wall_time: f64) -> Result<Self> {
        let det = det_curve(&scores.genuine_scores(), &scores.impostor_scores())?;
        Ok(Self {
            eer: eer(&det),
            det,
            n_genuine_trials: scores.genuine.len(),
            n_impostor_trials: scores.impostor.len(),
            n_writers: scores.n_writers,
            clamped: scores.clamped.clone(),
            protocol,
            wall_time,
        })
    }
}

pub fn run_protocol(
    protocol: &Protocol,
    corpus: &EvalCorpus,
    index: &UbmIndex,
    exec: Execution,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    let scores = score_trials(protocol, corpus, index, exec)?;
    ExperimentResult::from_scores(protocol.clone(), &scores, start.elapsed().as_secs_f64())
}
