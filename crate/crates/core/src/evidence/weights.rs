use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Channel;

/// Per-channel fusion weights. Resolved weights are non-negative and sum to
/// one over exactly the channels in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(BTreeMap<Channel, f64>);

/// Where a weight table comes from before it is resolved against a channel
/// selection.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum WeightSpec {
    /// Handcrafted fusion: g 0.10, qt 0.75, rl 0.05, t 0.10 (t split over t1..t4).
    #[default]
    DefaultH,
    /// Deep-feature fusion over `ext:d1..ext:d4`: 0.5, 0.25, 0.15, 0.1.
    DefaultDl,
    Equal,
    /// Explicit `channel=weight` pairs; `t=` spreads over t1..t4.
    Explicit(Vec<(String, f64)>),
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::DefaultH => f.write_str("default-h"),
            WeightSpec::DefaultDl => f.write_str("default-dl"),
            WeightSpec::Equal => f.write_str("equal"),
            WeightSpec::Explicit(pairs) => {
                let parts: Vec<String> = pairs.iter().map(|(c, w)| format!("{c}={w}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "default-h" => Ok(WeightSpec::DefaultH),
            "default-dl" => Ok(WeightSpec::DefaultDl),
            "equal" => Ok(WeightSpec::Equal),
            other => {
                let mut pairs = Vec::new();
                for part in other.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let (name, value) = part
                        .split_once('=')
                        .ok_or_else(|| Error::WeightMismatch(format!("expected channel=weight, got `{part}`")))?;
                    let value: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::WeightMismatch(format!("bad weight in `{part}`")))?;
                    pairs.push((name.trim().to_string(), value));
                }
                if pairs.is_empty() {
                    return Err(Error::WeightMismatch("empty weight specification".into()));
                }
                Ok(WeightSpec::Explicit(pairs))
            }
        }
    }
}

impl From<WeightSpec> for String {
    fn from(w: WeightSpec) -> String {
        w.to_string()
    }
}

impl TryFrom<String> for WeightSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn ext(name: &str) -> Channel {
    Channel::Ext(name.into())
}

impl WeightSpec {
    fn table(&self, channels: &[Channel]) -> Result<BTreeMap<Channel, f64>> {
        let mut t = BTreeMap::new();
        match self {
            WeightSpec::DefaultH => {
                t.insert(Channel::G, 0.10);
                t.insert(Channel::Qt, 0.75);
                t.insert(Channel::Rl, 0.05);
                for c in Channel::TEXTURAL {
                    t.insert(c, 0.10 / 4.0);
                }
            }
            WeightSpec::DefaultDl => {
                for (name, w) in [("d1", 0.5), ("d2", 0.25), ("d3", 0.15), ("d4", 0.1)] {
                    t.insert(ext(name), w);
                }
            }
            WeightSpec::Equal => {
                for c in channels {
                    t.insert(c.clone(), 1.0);
                }
            }
            WeightSpec::Explicit(pairs) => {
                for (name, w) in pairs {
                    let targets = if name == "t" {
                        Channel::TEXTURAL.iter().map(|c| (c.clone(), w / 4.0)).collect()
                    } else {
                        let c: Channel = name.parse().map_err(Error::WeightMismatch)?;
                        vec![(c, *w)]
                    };
                    for (c, w) in targets {
                        if t.insert(c.clone(), w).is_some() {
                            return Err(Error::WeightMismatch(format!("channel {c} weighted twice")));
                        }
                    }
                }
            }
        }
        Ok(t)
    }

    /// Restricts the table to `channels` and renormalises it to sum to one.
    pub fn resolve(&self, channels: &[Channel]) -> Result<Weights> {
        let table = self.table(channels)?;
        let mut picked = BTreeMap::new();
        for c in channels {
            let w = *table
                .get(c)
                .ok_or_else(|| Error::WeightMismatch(format!("no weight for channel {c} in {self}")))?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::WeightMismatch(format!("weight {w} for {c} is not a non-negative number")));
            }
            picked.insert(c.clone(), w);
        }
        let total: f64 = picked.values().sum();
        if total <= 0.0 {
            return Err(Error::WeightMismatch("weights sum to zero".into()));
        }
        picked.values_mut().for_each(|w| *w /= total);
        Ok(Weights(picked))
    }
}

impl Weights {
    /// Uses the given weights verbatim after checking they form a convex
    /// combination.
    pub fn new(map: BTreeMap<Channel, f64>) -> Result<Self> {
        if map.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::WeightMismatch("weights must be non-negative".into()));
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::WeightMismatch(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(map))
    }

    pub fn get(&self, channel: &Channel) -> Option<f64> {
        self.0.get(channel).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Channel, f64)> {
        self.0.iter().map(|(c, w)| (c, *w))
    }

    pub fn as_map(&self) -> &BTreeMap<Channel, f64> {
        &self.0
    }

    /// Fails unless the weights name exactly `channels`.
    pub fn check_covers(&self, channels: &[Channel]) -> Result<()> {
        let same = channels.len() == self.0.len() && channels.iter().all(|c| self.0.contains_key(c));
        if same {
            Ok(())
        } else {
            let have: Vec<String> = self.0.keys().map(|c| c.to_string()).collect();
            let want: Vec<String> = channels.iter().map(|c| c.to_string()).collect();
            Err(Error::WeightMismatch(format!(
                "weights cover [{}], channels are [{}]",
                have.join(","),
                want.join(",")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::parse_channels;

    #[test]
    fn default_h_over_all_handcrafted() {
        let w = WeightSpec::DefaultH.resolve(&Channel::HANDCRAFTED).unwrap();
        assert!((w.get(&Channel::Qt).unwrap() - 0.75).abs() < 1e-15);
        assert!((w.get(&Channel::T3).unwrap() - 0.025).abs() < 1e-15);
        let total: f64 = w.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_renormalises() {
        let w = WeightSpec::DefaultH.resolve(&parse_channels("g,rl").unwrap()).unwrap();
        assert!((w.get(&Channel::G).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((w.get(&Channel::Rl).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn default_dl() {
        let chans: Vec<Channel> = ["d1", "d2", "d3", "d4"].iter().map(|n| ext(n)).collect();
        let w = WeightSpec::DefaultDl.resolve(&chans).unwrap();
        assert_eq!(w.get(&ext("d1")), Some(0.5));
        assert!(WeightSpec::DefaultDl.resolve(&[Channel::G]).is_err());
    }

    #[test]
    fn explicit_and_round_trip() {
        let spec: WeightSpec = "g=1, t=2".parse().unwrap();
        let w = spec.resolve(&parse_channels("g,t").unwrap()).unwrap();
        assert!((w.get(&Channel::G).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((w.get(&Channel::T2).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(spec.to_string().parse::<WeightSpec>().unwrap(), spec);
        assert!(matches!("g=-1".parse::<WeightSpec>().unwrap().resolve(&[Channel::G]), Err(Error::WeightMismatch(_))));
        assert!(matches!("g".parse::<WeightSpec>(), Err(Error::WeightMismatch(_))));
        assert!(matches!("g=0".parse::<WeightSpec>().unwrap().resolve(&[Channel::G]), Err(Error::WeightMismatch(_))));
    }

    #[test]
    fn coverage_check() {
        let w = WeightSpec::Equal.resolve(&[Channel::G, Channel::Qt]).unwrap();
        assert!(w.check_covers(&[Channel::Qt, Channel::G]).is_ok());
        assert!(w.check_covers(&[Channel::G]).is_err());
        assert!(Weights::new([(Channel::G, 0.6)].into_iter().collect()).is_err());
    }
}
