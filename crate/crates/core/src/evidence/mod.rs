//! Likelihood-ratio evidence.
//!
//! For a questioned signature `q`, `delta1` is its distance to the nearest
//! UBM member and `delta2` its distance to the nearest reference. The
//! likelihood ratio `LR_q = -2 ln(delta2 / delta1)` is positive when `q` sits
//! closer to the references than to the background population.
//!
//! To judge how unusual `LR_q` is, the same ratio is computed for every UBM
//! member (leave-one-out within the UBM, against the references) and, given
//! at least two references, for every reference (leave-one-out within the
//! references, against the UBM). Each population is summarised by a normal
//! fit: `P(U)` is the upper tail of the UBM fit above `LR_q`, `P(R)` the lower
//! tail of the reference fit below it.
//!
//! Logarithms are natural and distances are floored at [`EPS`].

mod enrollment;
mod report;
mod weights;

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

pub use enrollment::{DistanceMatrix, Enrollment, UbmIndex};
pub use report::{
    ChannelCurve, ChannelEvidence, Decision, EvidenceConfig, EvidenceReport, ProbMode, UbmSummary,
    CURVE_POINTS, REPORT_SCHEMA_VERSION,
};
pub use weights::{WeightSpec, Weights};

use crate::distances::{distance, MetricId};
use crate::error::{Error, Result};
use crate::features::{Channel, FeatureSet, FeatureVector};
use crate::ubm::UniverseModel;

/// Floor applied to every distance before a ratio is taken.
pub const EPS: f64 = 1e-12;

/// Lower bound on a fitted standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[inline]
pub fn floor_distance(d: f64) -> f64 {
    d.max(EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationSource {
    Ubm,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrPopulation {
    pub source: PopulationSource,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
    pub n_samples: usize,
}

impl GaussianFit {
    /// Normal density at `x`, scaled so the peak equals one.
    pub fn normalized_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        (-0.5 * z * z).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mu) / self.sigma)
    }
}

/// Standard normal CDF through the complementary error function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn channel_of<'a>(set: &'a FeatureSet, channel: &Channel) -> Result<&'a FeatureVector> {
    set.require(channel)
}

/// Nearest pool member and its floored distance.
pub fn nearest<P: Borrow<FeatureSet>>(
    q: &FeatureSet,
    pool: &[P],
    channel: &Channel,
    metric: MetricId,
) -> Result<(usize, f64)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let qv = channel_of(q, channel)?;
    let mut best = (0, f64::INFINITY);
    for (i, m) in pool.iter().enumerate() {
        let d = distance(metric, qv, channel_of(m.borrow(), channel)?)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok((best.0, floor_distance(best.1)))
}

pub fn nearest_distance<P: Borrow<FeatureSet>>(
    q: &FeatureSet,
    pool: &[P],
    channel: &Channel,
    metric: MetricId,
) -> Result<f64> {
    nearest(q, pool, channel, metric).map(|(_, d)| d)
}

pub fn likelihood_ratio(delta2: f64, delta1: f64) -> f64 {
    -2.0 * (delta2 / delta1).ln()
}

fn leave_one_out<P: Borrow<FeatureSet>>(pool: &[P], i: usize) -> Vec<&FeatureSet> {
    pool.iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, m)| m.borrow())
        .collect()
}

/// LR of every UBM member against the references, each member excluded from
/// its own background pool.
pub fn ubm_lr_population<U: Borrow<FeatureSet>, R: Borrow<FeatureSet>>(
    ubm: &[U],
    refs: &[R],
    channel: &Channel,
    metric: MetricId,
) -> Result<LrPopulation> {
    if ubm.len() < 2 {
        return Err(Error::UniverseTooSmall(ubm.len()));
    }
    if refs.is_empty() {
        return Err(Error::EmptyPool);
    }
    let values = (0..ubm.len())
        .map(|i| {
            let u = ubm[i].borrow();
            let d1 = nearest_distance(u, &leave_one_out(ubm, i), channel, metric)?;
            let d2 = nearest_distance(u, refs, channel, metric)?;
            Ok(likelihood_ratio(d2, d1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LrPopulation {
        source: PopulationSource::Ubm,
        values,
    })
}

/// LR of every reference against the UBM, each reference excluded from its
/// own reference pool.
pub fn ref_lr_population<R: Borrow<FeatureSet>, U: Borrow<FeatureSet>>(
    refs: &[R],
    ubm: &[U],
    channel: &Channel,
    metric: MetricId,
) -> Result<LrPopulation> {
    if refs.len() < 2 {
        return Err(Error::ReferenceSetTooSmall(refs.len()));
    }
    let values = (0..refs.len())
        .map(|i| {
            let r = refs[i].borrow();
            let d1 = nearest_distance(r, &leave_one_out(refs, i), channel, metric)?;
            let d2 = nearest_distance(r, ubm, channel, metric)?;
            Ok(likelihood_ratio(d2, d1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LrPopulation {
        source: PopulationSource::Reference,
        values,
    })
}

/// Convenience wrapper taking a [`UniverseModel`].
pub fn ubm_population_of(
    ubm: &UniverseModel,
    refs: &[FeatureSet],
    channel: &Channel,
    metric: MetricId,
) -> Result<LrPopulation> {
    ubm_lr_population(ubm.members(), refs, channel, metric)
}

/// Sample mean and (n-1) standard deviation. Values are summed in sorted
/// order so the fit does not depend on population order.
pub fn fit_gaussian(pop: &LrPopulation) -> Result<GaussianFit> {
    fit_values(&pop.values)
}

pub fn fit_values(values: &[f64]) -> Result<GaussianFit> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mu = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
    Ok(GaussianFit {
        mu,
        sigma: var.sqrt().max(SIGMA_FLOOR),
        n_samples: n,
    })
}

/// Area of the UBM fit above `lr_q`.
pub fn prob_ubm(lr_q: f64, fit: &GaussianFit) -> f64 {
    let z = (lr_q - fit.mu) / fit.sigma;
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Area of the reference fit below `lr_q`.
pub fn prob_ref(lr_q: f64, fit: &GaussianFit) -> f64 {
    fit.cdf(lr_q)
}

/// Weighted sum of per-channel scores; the channel sets must agree.
pub fn fuse(scores: &std::collections::BTreeMap<Channel, f64>, weights: &Weights) -> Result<f64> {
    let channels: Vec<Channel> = scores.keys().cloned().collect();
    weights.check_covers(&channels)?;
    Ok(scores
        .iter()
        .map(|(c, s)| weights.get(c).unwrap_or(0.0) * s)
        .sum())
}

/// Single-shot verification: builds the populations for `refs` against the
/// full UBM and scores `q`. Exclude the enrolled writer from `ubm` first.
pub fn verify(
    q: &FeatureSet,
    refs: &[FeatureSet],
    ubm: &UniverseModel,
    cfg: &EvidenceConfig,
) -> Result<EvidenceReport> {
    let index = UbmIndex::new(ubm.clone());
    Enrollment::prepare(&index, refs, None, cfg, crate::Execution::default())?.score(q)
}
