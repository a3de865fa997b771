use serde::{Deserialize, Serialize};

use super::Channel;
use crate::error::{Error, Result};

const CHECKED_IN: &str = include_str!("../../config/features.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricalConfig {
    /// Column samples for each of the upper and lower envelopes.
    pub envelope_bins: usize,
    /// Angular bins of the radial contour profile.
    pub radial_bins: usize,
    /// Density, aspect, mean upper/lower envelope, envelope-gap spread.
    pub shape_scalars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadtreeConfig {
    /// Orientation bins per cell at depth 0, 1 and 2 (1, 4 and 16 cells).
    pub level_bins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthConfig {
    /// Histogram bins per direction; longer runs land in the last bin.
    pub max_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TexturalConfig {
    /// Gray-level difference thresholds, one LBP plane each.
    pub lbp_thresholds: Vec<f32>,
    pub code_bins: usize,
    /// Chebyshev radius around ink inside which texture is sampled.
    pub ink_margin: u32,
    pub lbp_dct: usize,
    pub ldp_dct: usize,
}

/// Bin layout of the handcrafted channels. Dimensions are checked against
/// the fixed channel sizes on every load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub geometrical: GeometricalConfig,
    pub quadtree: QuadtreeConfig,
    pub runlength: RunLengthConfig,
    pub textural: TexturalConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::checked_in()
    }
}

impl FeatureConfig {
    /// The configuration shipped in `config/features.json`.
    pub fn checked_in() -> Self {
        let cfg: FeatureConfig =
            serde_json::from_str(CHECKED_IN).expect("checked-in feature config parses");
        cfg.validate().expect("checked-in feature config matches channel dims");
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: FeatureConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidFeatureConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self, channel: &Channel) -> Option<usize> {
        let t = &self.textural;
        Some(match channel {
            Channel::G => {
                let g = &self.geometrical;
                2 * g.envelope_bins + g.radial_bins + g.shape_scalars
            }
            Channel::Qt => self
                .quadtree
                .level_bins
                .iter()
                .enumerate()
                .map(|(level, bins)| (1usize << (2 * level)) * bins)
                .sum(),
            Channel::Rl => 4 * self.runlength.max_run,
            Channel::T1 => t.lbp_thresholds.len() * t.code_bins,
            Channel::T2 => t.code_bins,
            Channel::T3 => t.lbp_dct,
            Channel::T4 => t.ldp_dct,
            Channel::Ext(_) => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometrical.shape_scalars != super::geometrical::SHAPE_SCALARS {
            return Err(Error::InvalidFeatureConfig(format!(
                "geometrical extractor emits {} shape scalars",
                super::geometrical::SHAPE_SCALARS
            )));
        }
        if self.quadtree.level_bins.len() != 3 || self.quadtree.level_bins.contains(&0) {
            return Err(Error::InvalidFeatureConfig(
                "quadtree needs non-zero bin counts for exactly 3 levels".into(),
            ));
        }
        if self.textural.code_bins == 0 || self.textural.code_bins > 256 {
            return Err(Error::InvalidFeatureConfig("code_bins must lie in 1..=256".into()));
        }
        if self.textural.lbp_dct > self.dim(&Channel::T1).unwrap_or(0)
            || self.textural.ldp_dct > self.textural.code_bins
        {
            return Err(Error::InvalidFeatureConfig(
                "more DCT coefficients requested than histogram bins".into(),
            ));
        }
        for channel in Channel::HANDCRAFTED {
            let got = self.dim(&channel).unwrap_or(0);
            let want = channel.declared_dim().unwrap_or(0);
            if got != want {
                return Err(Error::InvalidFeatureConfig(format!(
                    "channel {channel} configured for {got} values, must be {want}"
                )));
            }
        }
        Ok(())
    }
}
