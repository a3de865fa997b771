use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use super::report::{ChannelCurve, ChannelEvidence, Decision, EvidenceConfig, EvidenceReport, UbmSummary};
use super::{
    fit_values, floor_distance, likelihood_ratio, prob_ref, prob_ubm, GaussianFit, LrPopulation,
    PopulationSource, Weights, REPORT_SCHEMA_VERSION,
};
use crate::distances::{distance, MetricId};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{Channel, FeatureSet, SpecimenKey};
use crate::ubm::UniverseModel;

/// Symmetric matrix of raw (unfloored) pairwise distances between UBM
/// members.
#[derive(Debug)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn size(&self) -> usize {
        self.n
    }
}

/// A UBM together with lazily computed member-to-member distances, shared by
/// every enrollment that uses it. Excluding a writer only masks rows, so the
/// matrices are computed once per channel and metric.
#[derive(Debug)]
pub struct UbmIndex {
    ubm: UniverseModel,
    matrices: RwLock<HashMap<(Channel, MetricId), Arc<DistanceMatrix>>>,
}

impl UbmIndex {
    pub fn new(ubm: UniverseModel) -> Self {
        Self {
            ubm,
            matrices: RwLock::new(HashMap::new()),
        }
    }

    pub fn ubm(&self) -> &UniverseModel {
        &self.ubm
    }

    pub fn matrix(&self, channel: &Channel, metric: MetricId, exec: Execution) -> Result<Arc<DistanceMatrix>> {
        let key = (channel.clone(), metric);
        if let Some(m) = self.matrices.read().expect("matrix cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let members = self.ubm.members();
        let n = members.len();
        let vectors = members
            .iter()
            .map(|m| m.require(channel))
            .collect::<Result<Vec<_>>>()?;
        let rows = exec.map_range(n, |i| {
            ((i + 1)..n)
                .map(|j| distance(metric, vectors[i], vectors[j]))
                .collect::<Result<Vec<f64>>>()
        });
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (k, d) in row?.into_iter().enumerate() {
                let j = i + 1 + k;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        let m = Arc::new(DistanceMatrix { n, values });
        self.matrices
            .write()
            .expect("matrix cache poisoned")
            .entry(key)
            .or_insert(m.clone());
        Ok(m)
    }
}

#[derive(Debug, Clone)]
struct ChannelModel {
    channel: Channel,
    ubm_pop: LrPopulation,
    ubm_fit: GaussianFit,
    ref_pop: Option<LrPopulation>,
    ref_fit: Option<GaussianFit>,
}

/// The query-independent half of verification: LR populations and their
/// fits for one reference set against one (writer-excluded) UBM. Scoring a
/// questioned signature then costs one distance per UBM member and reference.
#[derive(Debug, Clone)]
pub struct Enrollment {
    members: Vec<Arc<FeatureSet>>,
    refs: Vec<FeatureSet>,
    cfg: EvidenceConfig,
    weights: Weights,
    models: Vec<ChannelModel>,
    summary: UbmSummary,
    exec: Execution,
}

fn min_with_key<'a>(items: impl Iterator<Item = (f64, &'a FeatureSet)>) -> (f64, SpecimenKey) {
    let mut best: Option<(f64, &FeatureSet)> = None;
    for (d, s) in items {
        let better = match best {
            None => true,
            Some((bd, bs)) => d < bd || (d == bd && s.key() < bs.key()),
        };
        if better {
            best = Some((d, s));
        }
    }
    let (d, s) = best.expect("pool checked non-empty");
    (d, s.key())
}

impl Enrollment {
    /// Computes populations for `refs`. Members written by `exclude_writer`
    /// are left out of the background pool.
    pub fn prepare(
        index: &UbmIndex,
        refs: &[FeatureSet],
        exclude_writer: Option<&str>,
        cfg: &EvidenceConfig,
        exec: Execution,
    ) -> Result<Self> {
        Self::prepare_limited(index, refs, exclude_writer, None, cfg, exec)
    }

    /// As [`Enrollment::prepare`], using only the first `limit` UBM members
    /// (before exclusion). Equivalent to preparing against
    /// `ubm.truncated(limit)` while reusing the cached distances.
    pub fn prepare_limited(
        index: &UbmIndex,
        refs: &[FeatureSet],
        exclude_writer: Option<&str>,
        limit: Option<usize>,
        cfg: &EvidenceConfig,
        exec: Execution,
    ) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::NoReferences);
        }
        let weights = cfg.resolved_weights()?;
        let ubm = index.ubm();
        let limit = match limit {
            Some(n) if n > ubm.size() => {
                return Err(Error::InsufficientCorpus {
                    requested: n,
                    available: ubm.size(),
                })
            }
            Some(n) => n,
            None => ubm.size(),
        };
        let active: Vec<usize> = (0..limit)
            .filter(|&i| Some(ubm.members()[i].writer_id.as_str()) != exclude_writer)
            .collect();
        if active.len() < 2 {
            return Err(Error::UniverseTooSmall(active.len()));
        }
        let members: Vec<Arc<FeatureSet>> = active.iter().map(|&i| ubm.members()[i].clone()).collect();

        let mut models = Vec::with_capacity(cfg.channels.len());
        for channel in &cfg.channels {
            let ref_vecs = refs.iter().map(|r| r.require(channel)).collect::<Result<Vec<_>>>()?;
            let matrix = index.matrix(channel, cfg.metric, exec)?;
            // distances from each active member to each reference
            let to_refs = exec
                .map(&members, |m| {
                    let v = m.require(channel)?;
                    ref_vecs.iter().map(|r| distance(cfg.metric, v, r)).collect::<Result<Vec<f64>>>()
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;

            let ubm_values: Vec<f64> = exec.map_range(active.len(), |a| {
                let i = active[a];
                let d1 = active
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| matrix.get(i, j))
                    .fold(f64::INFINITY, f64::min);
                let d2 = to_refs[a].iter().copied().fold(f64::INFINITY, f64::min);
                likelihood_ratio(floor_distance(d2), floor_distance(d1))
            });
            let ubm_pop = LrPopulation {
                source: PopulationSource::Ubm,
                values: ubm_values,
            };
            let ubm_fit = fit_values(&ubm_pop.values)?;

            let (ref_pop, ref_fit) = if refs.len() >= 2 {
                let mut values = Vec::with_capacity(refs.len());
                for r in 0..refs.len() {
                    let mut d1 = f64::INFINITY;
                    for s in 0..refs.len() {
                        if s != r {
                            d1 = d1.min(distance(cfg.metric, ref_vecs[r], ref_vecs[s])?);
                        }
                    }
                    let d2 = to_refs.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min);
                    values.push(likelihood_ratio(floor_distance(d2), floor_distance(d1)));
                }
                let pop = LrPopulation {
                    source: PopulationSource::Reference,
                    values,
                };
                let fit = fit_values(&pop.values)?;
                (Some(pop), Some(fit))
            } else {
                (None, None)
            };
            models.push(ChannelModel {
                channel: channel.clone(),
                ubm_pop,
                ubm_fit,
                ref_pop,
                ref_fit,
            });
        }

        Ok(Self {
            members,
            refs: refs.to_vec(),
            cfg: cfg.clone(),
            weights,
            models,
            summary: UbmSummary {
                size: active.len(),
                origin: ubm.origin(),
                provenance: ubm.provenance().to_string(),
                excluded_writer: exclude_writer.map(str::to_string),
            },
            exec,
        })
    }

    pub fn config(&self) -> &EvidenceConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn ubm_size(&self) -> usize {
        self.members.len()
    }

    fn model(&self, channel: &Channel) -> Option<&ChannelModel> {
        self.models.iter().find(|m| &m.channel == channel)
    }

    pub fn ubm_population(&self, channel: &Channel) -> Option<&LrPopulation> {
        self.model(channel).map(|m| &m.ubm_pop)
    }

    pub fn ref_population(&self, channel: &Channel) -> Option<&LrPopulation> {
        self.model(channel).and_then(|m| m.ref_pop.as_ref())
    }

    fn channel_evidence(&self, q: &FeatureSet, model: &ChannelModel) -> Result<ChannelEvidence> {
        let channel = &model.channel;
        let metric = self.cfg.metric;
        let qv = q.require(channel)?;
        let to_ubm = self
            .exec
            .map(&self.members, |m| distance(metric, qv, m.require(channel)?))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let to_refs = self
            .refs
            .iter()
            .map(|r| distance(metric, qv, r.require(channel)?))
            .collect::<Result<Vec<_>>>()?;
        let (d1, nearest_ubm) = min_with_key(to_ubm.into_iter().zip(self.members.iter().map(|m| m.as_ref())));
        let (d2, nearest_ref) = min_with_key(to_refs.into_iter().zip(self.refs.iter()));
        let (delta1, delta2) = (floor_distance(d1), floor_distance(d2));
        let lr_q = likelihood_ratio(delta2, delta1);
        let p_u = prob_ubm(lr_q, &model.ubm_fit);
        let p_r = model.ref_fit.map(|f| {
            let p = prob_ref(lr_q, &f);
            if self.cfg.prob_ref_complement {
                1.0 - p
            } else {
                p
            }
        });
        let mut ev = ChannelEvidence {
            channel: channel.clone(),
            delta1,
            delta2,
            lr_q,
            p_u,
            p_r,
            ubm_fit: model.ubm_fit,
            ref_fit: model.ref_fit,
            nearest_ubm,
            nearest_ref,
            score: 0.0,
        };
        ev.score = lr_q + ev.probability_term(self.cfg.prob_mode);
        Ok(ev)
    }

    fn fused(&self, per_channel: &BTreeMap<Channel, ChannelEvidence>) -> f64 {
        self.cfg
            .channels
            .iter()
            .map(|c| self.weights.get(c).unwrap_or(0.0) * per_channel[c].score)
            .sum()
    }

    /// Fused score alone, skipping curve sampling.
    pub fn fused_score(&self, q: &FeatureSet) -> Result<f64> {
        let per_channel = self
            .models
            .iter()
            .map(|m| Ok((m.channel.clone(), self.channel_evidence(q, m)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(self.fused(&per_channel))
    }

    pub fn score(&self, q: &FeatureSet) -> Result<EvidenceReport> {
        let per_channel = self
            .models
            .iter()
            .map(|m| Ok((m.channel.clone(), self.channel_evidence(q, m)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let fused_score = self.fused(&per_channel);
        let curves = per_channel
            .iter()
            .map(|(c, ev)| (c.clone(), ChannelCurve::sample(&ev.ubm_fit, ev.ref_fit.as_ref(), ev.lr_q)))
            .collect();
        let decision = self.cfg.decision_threshold.map(|t| {
            if fused_score >= t {
                Decision::Accept
            } else {
                Decision::Reject
            }
        });
        Ok(EvidenceReport {
            schema_version: REPORT_SCHEMA_VERSION,
            questioned: q.key(),
            references: self.refs.iter().map(FeatureSet::key).collect(),
            metric: self.cfg.metric,
            channels: self.cfg.channels.clone(),
            per_channel,
            weights: self.weights.clone(),
            prob_mode: self.cfg.prob_mode,
            prob_ref_complement: self.cfg.prob_ref_complement,
            fused_score,
            curves,
            ubm: self.summary.clone(),
            decision_threshold: self.cfg.decision_threshold,
            decision,
        })
    }
}
