//! Parameter sweeps over protocol cells.
//!
//! Cells enumerate channel sets, then metrics, UBM sizes, reference counts
//! and scenarios (innermost). Scenarios of the same outer combination share
//! one enrollment per writer and are timed together.
//!
//! The CSV carries no timings so that repeated runs with the same seed are
//! byte-identical; timings, the full configuration and its hash go to the
//! JSON sidecar.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    det_curve, eer, score_scenarios, DetCurve, EvalCorpus, Protocol, Scenario, RF_IMPOSTOR_WRITERS,
};
use crate::distances::MetricId;
use crate::error::Result;
use crate::evidence::{EvidenceConfig, ProbMode, UbmIndex, WeightSpec};
use crate::exec::Execution;
use crate::features::Channel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub name: String,
    pub channels: Vec<Channel>,
    pub weights: WeightSpec,
}

impl ChannelSet {
    pub fn handcrafted() -> Self {
        Self {
            name: "explainable".into(),
            channels: Channel::HANDCRAFTED.to_vec(),
            weights: WeightSpec::DefaultH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub ubm_id: String,
    pub scenarios: Vec<Scenario>,
    pub n_refs: Vec<usize>,
    pub metrics: Vec<MetricId>,
    /// `None` uses the whole UBM.
    pub ubm_sizes: Vec<Option<usize>>,
    pub channel_sets: Vec<ChannelSet>,
    pub seed: u64,
    pub rf_impostor_writers: usize,
    pub prob_mode: ProbMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ubm_id: "ubm".into(),
            scenarios: vec![Scenario::RandomForgery, Scenario::SkilledForgery],
            n_refs: vec![1],
            metrics: vec![MetricId::L1],
            ubm_sizes: vec![None],
            channel_sets: vec![ChannelSet::handcrafted()],
            seed: 42,
            rf_impostor_writers: RF_IMPOSTOR_WRITERS,
            prob_mode: ProbMode::Oriented,
        }
    }
}

impl SweepConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("sweep config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn cells(&self) -> Vec<(String, Protocol)> {
        let mut out = Vec::new();
        for set in &self.channel_sets {
            for &metric in &self.metrics {
                for &ubm_size in &self.ubm_sizes {
                    for &n_refs in &self.n_refs {
                        for &scenario in &self.scenarios {
                            out.push((
                                set.name.clone(),
                                Protocol {
                                    scenario,
                                    n_refs,
                                    metric,
                                    channels: set.channels.clone(),
                                    weights: set.weights.clone(),
                                    ubm_id: self.ubm_id.clone(),
                                    ubm_size,
                                    rng_seed: self.seed,
                                    rf_impostor_writers: self.rf_impostor_writers,
                                    prob_mode: self.prob_mode,
                                },
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Done {
        eer: f64,
        det: DetCurve,
        n_writers: usize,
        n_genuine: usize,
        n_impostor: usize,
        rf_clamped_writers: usize,
    },
    Failed {
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: usize,
    pub channel_set: String,
    pub protocol: Protocol,
    pub outcome: CellOutcome,
    /// Seconds spent on this cell's group (scenarios sharing an enrollment).
    pub wall_time: f64,
}

impl CellResult {
    pub fn eer(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Done { eer, .. } => Some(*eer),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub config_hash: String,
    pub cells: Vec<CellResult>,
    pub wall_time: f64,
}

/// Runs every cell. A failing cell is recorded and the sweep continues.
pub fn run_sweep(config: &SweepConfig, corpus: &EvalCorpus, index: &UbmIndex, exec: Execution) -> SweepResult {
    let start = Instant::now();
    let cells = config.cells();
    let mut results: Vec<CellResult> = Vec::with_capacity(cells.len());
    let group = config.scenarios.len().max(1);
    for chunk in cells.chunks(group) {
        let first = &chunk[0].1;
        let cfg = EvidenceConfig {
            metric: first.metric,
            channels: first.channels.clone(),
            weights: first.weights.clone(),
            prob_mode: first.prob_mode,
            ..EvidenceConfig::default()
        };
        let scenarios: Vec<Scenario> = chunk.iter().map(|(_, p)| p.scenario).collect();
        let t0 = Instant::now();
        let scored = if first.n_refs == 0 {
            Err(crate::Error::NoReferences)
        } else {
            score_scenarios(
                &scenarios,
                first.n_refs,
                &cfg,
                first.ubm_size,
                first.rng_seed,
                first.rf_impostor_writers,
                corpus,
                index,
                exec,
            )
        };
        let wall_time = t0.elapsed().as_secs_f64();
        for (set_name, protocol) in chunk {
            let outcome = match &scored {
                Err(e) => CellOutcome::Failed {
                    code: e.code().into(),
                    message: e.to_string(),
                },
                Ok(map) => {
                    let s = &map[&protocol.scenario];
                    match det_curve(&s.genuine_scores(), &s.impostor_scores()) {
                        Ok(det) => CellOutcome::Done {
                            eer: eer(&det),
                            det,
                            n_writers: s.n_writers,
                            n_genuine: s.genuine.len(),
                            n_impostor: s.impostor.len(),
                            rf_clamped_writers: s.clamped.len(),
                        },
                        Err(e) => CellOutcome::Failed {
                            code: e.code().into(),
                            message: e.to_string(),
                        },
                    }
                }
            };
            results.push(CellResult {
                cell: results.len(),
                channel_set: set_name.clone(),
                protocol: protocol.clone(),
                outcome,
                wall_time,
            });
        }
    }
    SweepResult {
        config: config.clone(),
        config_hash: config.hash(),
        cells: results,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Column order of the results CSV.
pub const CSV_COLUMNS: [&str; 17] = [
    "cell",
    "channel_set",
    "channels",
    "weights",
    "metric",
    "ubm_size",
    "n_refs",
    "scenario",
    "seed",
    "rf_impostor_writers",
    "n_writers",
    "n_genuine",
    "n_impostor",
    "rf_clamped_writers",
    "eer",
    "status",
    "error",
];

pub fn write_results_csv<W: Write>(w: W, result: &SweepResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| crate::Error::Io(std::io::Error::other(e.to_string()));
    out.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for c in &result.cells {
        let p = &c.protocol;
        let channels: Vec<String> = p.channels.iter().map(|c| c.to_string()).collect();
        let mut row = vec![
            c.cell.to_string(),
            c.channel_set.clone(),
            channels.join(","),
            p.weights.to_string(),
            p.metric.to_string(),
            p.ubm_size.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
            p.n_refs.to_string(),
            p.scenario.to_string(),
            p.rng_seed.to_string(),
            p.rf_impostor_writers.to_string(),
        ];
        match &c.outcome {
            CellOutcome::Done {
                eer,
                n_writers,
                n_genuine,
                n_impostor,
                rf_clamped_writers,
                ..
            } => row.extend([
                n_writers.to_string(),
                n_genuine.to_string(),
                n_impostor.to_string(),
                rf_clamped_writers.to_string(),
                format!("{eer}"),
                "ok".into(),
                String::new(),
            ]),
            CellOutcome::Failed { code, message } => row.extend([
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "failed".into(),
                format!("{code}: {message}"),
            ]),
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SidecarCell<'a> {
    cell: usize,
    channel_set: &'a str,
    scenario: Scenario,
    n_refs: usize,
    metric: MetricId,
    ubm_size: Option<usize>,
    status: &'static str,
    eer: Option<f64>,
    wall_time_s: f64,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a SweepConfig,
    config_hash: &'a str,
    ubm_size: usize,
    ubm_provenance: &'a str,
    total_wall_time_s: f64,
    cells: Vec<SidecarCell<'a>>,
}

impl SweepResult {
    pub fn sidecar_json(&self, index: &UbmIndex) -> Result<String> {
        let sidecar = Sidecar {
            tool: "sigproof",
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            config_hash: &self.config_hash,
            ubm_size: index.ubm().size(),
            ubm_provenance: index.ubm().provenance(),
            total_wall_time_s: self.wall_time,
            cells: self
                .cells
                .iter()
                .map(|c| SidecarCell {
                    cell: c.cell,
                    channel_set: &c.channel_set,
                    scenario: c.protocol.scenario,
                    n_refs: c.protocol.n_refs,
                    metric: c.protocol.metric,
                    ubm_size: c.protocol.ubm_size,
                    status: if c.eer().is_some() { "ok" } else { "failed" },
                    eer: c.eer(),
                    wall_time_s: c.wall_time,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&sidecar)?)
    }

    /// Plain-text table for terminals.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:>4}  {:<12} {:<6} {:>8} {:>6} {:<3} {:>9}\n",
            "cell", "channels", "metric", "ubm", "refs", "scn", "EER(%)"
        );
        for c in &self.cells {
            let p = &c.protocol;
            let eer = match &c.outcome {
                CellOutcome::Done { eer, .. } => format!("{:.2}", eer * 100.0),
                CellOutcome::Failed { code, .. } => code.clone(),
            };
            s.push_str(&format!(
                "{:>4}  {:<12} {:<6} {:>8} {:>6} {:<3} {:>9}\n",
                c.cell,
                c.channel_set,
                p.metric.to_string(),
                p.ubm_size.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
                p.n_refs,
                p.scenario.to_string(),
                eer
            ));
        }
        s
    }
}
