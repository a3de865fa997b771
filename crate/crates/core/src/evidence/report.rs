use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GaussianFit, WeightSpec, Weights};
use crate::distances::MetricId;
use crate::error::Result;
use crate::features::{Channel, SpecimenKey};
use crate::ubm::Origin;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Samples per emitted density curve.
pub const CURVE_POINTS: usize = 256;

/// How membership probabilities enter the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbMode {
    /// Both probabilities oriented so larger means more genuine:
    /// `p = p_r + (1 - p_u)`, or `1 - p_u` without a reference population.
    #[default]
    Oriented,
    /// Probabilities added as reported: `p = p_u + p_r`, or `p_u` alone.
    Raw,
}

impl std::str::FromStr for ProbMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oriented" => Ok(ProbMode::Oriented),
            "raw" => Ok(ProbMode::Raw),
            other => Err(format!("unknown probability mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceConfig {
    pub metric: MetricId,
    pub channels: Vec<Channel>,
    pub weights: WeightSpec,
    pub prob_mode: ProbMode,
    /// Report `1 - CDF` for P(R) instead of the CDF.
    pub prob_ref_complement: bool,
    pub decision_threshold: Option<f64>,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self {
            metric: MetricId::L1,
            channels: Channel::HANDCRAFTED.to_vec(),
            weights: WeightSpec::DefaultH,
            prob_mode: ProbMode::Oriented,
            prob_ref_complement: false,
            decision_threshold: None,
        }
    }
}

impl EvidenceConfig {
    pub fn new(metric: MetricId, channels: Vec<Channel>, weights: WeightSpec) -> Self {
        Self {
            metric,
            channels,
            weights,
            ..Self::default()
        }
    }

    pub fn resolved_weights(&self) -> Result<Weights> {
        self.weights.resolve(&self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvidence {
    pub channel: Channel,
    pub delta1: f64,
    pub delta2: f64,
    pub lr_q: f64,
    pub p_u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r: Option<f64>,
    pub ubm_fit: GaussianFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_fit: Option<GaussianFit>,
    /// Closest UBM member and reference, for inspection.
    pub nearest_ubm: SpecimenKey,
    pub nearest_ref: SpecimenKey,
    /// `lr_q + p` as it enters the fusion.
    pub score: f64,
}

impl ChannelEvidence {
    pub fn probability_term(&self, mode: ProbMode) -> f64 {
        match (mode, self.p_r) {
            (ProbMode::Oriented, Some(p_r)) => p_r + (1.0 - self.p_u),
            (ProbMode::Oriented, None) => 1.0 - self.p_u,
            (ProbMode::Raw, Some(p_r)) => self.p_u + p_r,
            (ProbMode::Raw, None) => self.p_u,
        }
    }
}

/// Peak-normalised densities of the fitted LR populations on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCurve {
    pub x: Vec<f64>,
    pub ubm_pdf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_pdf: Option<Vec<f64>>,
    pub lr_q: f64,
}

impl ChannelCurve {
    pub fn sample(ubm: &GaussianFit, reference: Option<&GaussianFit>, lr_q: f64) -> Self {
        let fits: Vec<&GaussianFit> = std::iter::once(ubm).chain(reference).collect();
        let lo = fits.iter().map(|f| f.mu - 3.0 * f.sigma).fold(f64::INFINITY, f64::min);
        let hi = fits.iter().map(|f| f.mu + 3.0 * f.sigma).fold(f64::NEG_INFINITY, f64::max);
        let step = (hi - lo) / (CURVE_POINTS - 1) as f64;
        let x: Vec<f64> = (0..CURVE_POINTS).map(|i| lo + step * i as f64).collect();
        let ubm_pdf = x.iter().map(|&v| ubm.normalized_pdf(v)).collect();
        let ref_pdf = reference.map(|f| x.iter().map(|&v| f.normalized_pdf(v)).collect());
        Self {
            x,
            ubm_pdf,
            ref_pdf,
            lr_q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UbmSummary {
    pub size: usize,
    pub origin: Origin,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_writer: Option<String>,
}

/// Everything the verifier knows about one questioned signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub schema_version: u32,
    pub questioned: SpecimenKey,
    pub references: Vec<SpecimenKey>,
    pub metric: MetricId,
    pub channels: Vec<Channel>,
    pub per_channel: BTreeMap<Channel, ChannelEvidence>,
    pub weights: Weights,
    pub prob_mode: ProbMode,
    pub prob_ref_complement: bool,
    pub fused_score: f64,
    pub curves: BTreeMap<Channel, ChannelCurve>,
    pub ubm: UbmSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

impl EvidenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
