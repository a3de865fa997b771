use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// False acceptance and false rejection rates over every distinct score
/// threshold, ascending. A trial is accepted when `score >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

/// Thresholds are the distinct scores plus both infinities.
pub fn det_curve(genuine: &[f64], impostor: &[f64]) -> Result<DetCurve> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut g = genuine.to_vec();
    let mut i = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    // two cursors: count of scores strictly below the threshold
    let (mut gi, mut ii) = (0usize, 0usize);
    for t in thresholds {
        while gi < g.len() && g[gi] < t {
            gi += 1;
        }
        while ii < i.len() && i[ii] < t {
            ii += 1;
        }
        points.push(DetPoint {
            threshold: t,
            far: (i.len() - ii) as f64 / ni,
            frr: gi as f64 / ng,
        });
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(DetCurve { points })
}

/// Equal error rate. Scans thresholds upward for the first point where
/// `far - frr` stops being positive: an exact touch returns the shared value,
/// a sign change is linearly interpolated with the previous point.
pub fn eer(det: &DetCurve) -> f64 {
    let pts = &det.points;
    for k in 0..pts.len() {
        let diff = pts[k].far - pts[k].frr;
        if diff == 0.0 {
            return pts[k].far;
        }
        if diff < 0.0 {
            if k == 0 {
                return pts[0].frr;
            }
            let (a, b) = (pts[k - 1], pts[k]);
            let da = a.far - a.frr;
            let s = da / (da - diff);
            return a.far + s * (b.far - a.far);
        }
    }
    // unreachable for curves built by det_curve, which end at far 0, frr 1
    pts.last().map(|p| p.far).unwrap_or(0.0)
}

fn fmt_threshold(t: f64) -> String {
    if t == f64::INFINITY {
        "inf".into()
    } else if t == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{t}")
    }
}

pub fn write_det_csv<W: Write>(mut w: W, det: &DetCurve) -> Result<()> {
    writeln!(w, "threshold,far,frr")?;
    for p in &det.points {
        writeln!(w, "{},{},{}", fmt_threshold(p.threshold), p.far, p.frr)?;
    }
    Ok(())
}

pub fn save_det_csv(path: &Path, det: &DetCurve) -> Result<()> {
    let mut buf = Vec::new();
    write_det_csv(&mut buf, det)?;
    std::fs::write(path, buf).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
