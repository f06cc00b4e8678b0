use serde::{Deserialize, Serialize};

use super::runlog::{LatencyRecord, RunLog};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles. `None` for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Self {
            count: v.len(),
            min: v[0],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: rank(0.50),
            p95: rank(0.95),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Capture stamp of the triggering frame to the first full-brake tick.
    pub capture_to_brake: LatencyStats,
    /// Appearance of the person to the first full-brake tick, when known.
    pub onset_to_brake: Option<LatencyStats>,
}

pub fn latency_stats(records: &[LatencyRecord]) -> Result<LatencyReport, HarnessError> {
    let c2b: Vec<f64> = records.iter().map(|r| r.latency_capture_to_brake).collect();
    let o2b: Vec<f64> = records.iter().filter_map(|r| r.latency_onset_to_brake).collect();
    Ok(LatencyReport {
        capture_to_brake: LatencyStats::from_samples(&c2b).ok_or(HarnessError::NoTriggers)?,
        onset_to_brake: LatencyStats::from_samples(&o2b),
    })
}

pub fn measure_latencies(log: &RunLog) -> Result<LatencyReport, HarnessError> {
    latency_stats(&log.latencies)
}
