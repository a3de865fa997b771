//! Matching distances between feature vectors.
//!
//! DTW treats each vector as a scalar sequence: the cell cost is the absolute
//! difference `|a_i - b_j|`, steps are `(i-1, j)`, `(i, j-1)` and
//! `(i-1, j-1)`, both ends are anchored, there is no window, and the total
//! cost is returned without path-length normalisation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Distance substituted when cosine distance meets an all-zero vector.
pub const COSINE_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Dtw,
    L1,
    Cosine,
}

impl MetricId {
    pub const ALL: [MetricId; 3] = [MetricId::Dtw, MetricId::L1, MetricId::Cosine];
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricId::Dtw => "dtw",
            MetricId::L1 => "l1",
            MetricId::Cosine => "cosine",
        })
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dtw" => Ok(MetricId::Dtw),
            "l1" => Ok(MetricId::L1),
            "cosine" => Ok(MetricId::Cosine),
            other => Err(Error::UnknownMetric(other.into())),
        }
    }
}

fn same_channel(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    if a.channel() != b.channel() {
        return Err(Error::ChannelMismatch(a.channel().clone(), b.channel().clone()));
    }
    Ok(())
}

fn same_dim(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    same_channel(a, b)?;
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            channel: a.channel().clone(),
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

pub fn l1_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    same_dim(a, b)?;
    Ok(l1(a.values(), b.values()))
}

pub fn cosine_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    same_dim(a, b)?;
    cosine(a.values(), b.values())
}

pub fn dtw_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    same_channel(a, b)?;
    dtw(a.values(), b.values())
}

/// Dispatches to the selected metric. A zero vector under cosine yields
/// [`COSINE_MAX`] instead of an error.
pub fn distance(metric: MetricId, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    match metric {
        MetricId::L1 => l1_distance(a, b),
        MetricId::Dtw => dtw_distance(a, b),
        MetricId::Cosine => match cosine_distance(a, b) {
            Err(Error::ZeroVector) => Ok(COSINE_MAX),
            other => other,
        },
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let sim = dot / (na.sqrt() * nb.sqrt());
    Ok((1.0 - sim).clamp(0.0, 2.0))
}

/// Dynamic time warping with two rolling rows of the cumulative cost matrix.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyVector);
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        curr[0] = f64::INFINITY;
        for (j, &y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = (x - y).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Channel;
    use proptest::prelude::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(Channel::Ext("x".into()), values.to_vec()).unwrap()
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_distance(&fv(&[1.0, 2.0, 3.0]), &fv(&[4.0, 6.0, 8.0])).unwrap(), 12.0);
        let a = fv(&[0.3, -2.0]);
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mismatches() {
        let a = fv(&[1.0, 2.0]);
        let b = fv(&[1.0]);
        assert!(matches!(l1_distance(&a, &b), Err(Error::DimMismatch { .. })));
        let c = FeatureVector::new(Channel::Ext("y".into()), vec![1.0, 2.0]).unwrap();
        assert!(matches!(cosine_distance(&a, &c), Err(Error::ChannelMismatch(..))));
        assert!(matches!(dtw_distance(&a, &c), Err(Error::ChannelMismatch(..))));
        // DTW tolerates unequal lengths
        assert_eq!(dtw_distance(&fv(&[0.0, 0.0]), &fv(&[1.0])).unwrap(), 2.0);
    }

    #[test]
    fn cosine_examples() {
        assert!(cosine_distance(&fv(&[3.0, 4.0]), &fv(&[3.0, 4.0])).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(cosine_distance(&fv(&[1.0, 0.0]), &fv(&[-1.0, 0.0])).unwrap(), 2.0);
        assert!(matches!(
            cosine_distance(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])),
            Err(Error::ZeroVector)
        ));
        assert_eq!(distance(MetricId::Cosine, &fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn dtw_empty() {
        assert!(matches!(dtw(&[], &[1.0]), Err(Error::EmptyVector)));
    }

    #[test]
    fn metric_names() {
        for m in MetricId::ALL {
            assert_eq!(m.to_string().parse::<MetricId>().unwrap(), m);
        }
        assert!(matches!("l2".parse::<MetricId>(), Err(Error::UnknownMetric(_))));
    }

    /// Minimum total cost over every monotone, boundary-anchored warping
    /// path, enumerated recursively.
    fn dtw_paths(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + (a[i] - b[j]).abs();
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best
    }

    fn sequences(max_len: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for len in 1..=max_len {
            for code in 0..4usize.pow(len as u32) {
                out.push((0..len).map(|k| ((code >> (2 * k)) & 3) as f64).collect());
            }
        }
        out
    }

    #[test]
    fn dtw_matches_path_enumeration_exhaustively() {
        // every pair up to length 3; the acceptance suite covers length 6
        let short = sequences(3);
        for a in &short {
            for b in &short {
                assert_eq!(dtw(a, b).unwrap(), dtw_paths(a, b), "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn dtw_small_cases() {
        assert_eq!(dtw(&[0.0, 0.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dtw(&[0.0, 1.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap(), 0.0);
    }

    fn vec_pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-100.0f64..100.0, len),
            prop::collection::vec(-100.0f64..100.0, len),
        )
    }

    proptest! {
        #[test]
        fn l1_matches_naive_loop((a, b) in vec_pair(445)) {
            let mut naive = 0.0;
            for k in 0..a.len() {
                naive += if a[k] > b[k] { a[k] - b[k] } else { b[k] - a[k] };
            }
            prop_assert!((l1(&a, &b) - naive).abs() <= 1e-12 * naive.max(1.0));
        }

        #[test]
        fn dtw_symmetric_and_zero_on_self((a, b) in vec_pair(12)) {
            prop_assert_eq!(dtw(&a, &a).unwrap(), 0.0);
            prop_assert!((dtw(&a, &b).unwrap() - dtw(&b, &a).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn dispatch_equals_direct((a, b) in vec_pair(20)) {
            let (fa, fb) = (fv(&a), fv(&b));
            prop_assert_eq!(distance(MetricId::Dtw, &fa, &fb).unwrap(), dtw_distance(&fa, &fb).unwrap());
            prop_assert_eq!(distance(MetricId::L1, &fa, &fb).unwrap(), l1_distance(&fa, &fb).unwrap());
        }
    }
}
