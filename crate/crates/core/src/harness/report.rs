//! Human- and machine-readable summaries of a run.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::latency::{measure_latencies, LatencyReport};
use super::runlog::{EventKind, LogEvent, RunLog, Termination};
use super::scenario::ScenarioKind;
use super::stage::StageKind;
use super::HarnessError;

/// Rows before this time are excluded from the settled lateral-error figures.
pub const SETTLING_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralSummary {
    pub mean: f64,
    pub max: f64,
    pub settling_window: f64,
    pub mean_after_settling: f64,
    pub max_after_settling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub min: f64,
    pub final_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: ScenarioKind,
    pub stage: StageKind,
    pub seed: u64,
    pub ticks: usize,
    pub duration: f64,
    pub termination: Termination,
    pub lateral_error: Option<LateralSummary>,
    pub gap: Option<GapSummary>,
    /// (time, gap) for every tick with a lead vehicle.
    pub gap_series: Vec<(f64, f64)>,
    pub latency: Option<LatencyReport>,
    pub latency_records: usize,
    pub timeline: Vec<LogEvent>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn report(log: &RunLog) -> Report {
    let errs: Vec<f64> = log.rows.iter().map(|r| r.lateral_error).collect();
    let settled: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.time >= SETTLING_WINDOW)
        .map(|r| r.lateral_error)
        .collect();
    let lateral_error = (!errs.is_empty()).then(|| LateralSummary {
        mean: mean(&errs),
        max: max(&errs),
        settling_window: SETTLING_WINDOW,
        mean_after_settling: if settled.is_empty() { f64::NAN } else { mean(&settled) },
        max_after_settling: if settled.is_empty() { f64::NAN } else { max(&settled) },
    });
    let gap_series: Vec<(f64, f64)> = log
        .rows
        .iter()
        .filter_map(|r| r.gap.map(|g| (r.time, g)))
        .collect();
    let gap = gap_series.last().map(|&(_, last)| GapSummary {
        min: gap_series.iter().map(|g| g.1).fold(f64::INFINITY, f64::min),
        final_gap: last,
    });
    let timeline = log
        .events
        .iter()
        .filter(|e| !matches!(e.kind, EventKind::Gateway { event: crate::gateway::GatewayEvent::FrameFault { .. } }))
        .cloned()
        .collect();
    Report {
        scenario: log.meta.scenario.name,
        stage: log.meta.stage,
        seed: log.meta.scenario.seed,
        ticks: log.rows.len(),
        duration: log.rows.len() as f64 * log.meta.scenario.tick_period,
        termination: log.termination.clone(),
        lateral_error,
        gap,
        gap_series,
        latency: measure_latencies(log).ok(),
        latency_records: log.latencies.len(),
        timeline,
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:?} on {} stage, seed {}: {} ticks ({:.2} s), {}",
            self.scenario,
            self.stage.as_str(),
            self.seed,
            self.ticks,
            self.duration,
            match &self.termination {
                Termination::Completed => "completed".to_string(),
                Termination::Diverged { tick, reason } => format!("diverged at tick {tick}: {reason}"),
                Termination::Stopped { tick, reason } => format!("stopped at tick {tick}: {reason}"),
            }
        );
        if let Some(l) = &self.lateral_error {
            let _ = writeln!(
                s,
                "lateral error: mean {:.4} m, max {:.4} m; after {:.0} s: mean {:.4} m, max {:.4} m",
                l.mean, l.max, l.settling_window, l.mean_after_settling, l.max_after_settling
            );
        }
        if let Some(g) = &self.gap {
            let _ = writeln!(s, "gap: min {:.3} m, final {:.3} m", g.min, g.final_gap);
        }
        match &self.latency {
            Some(l) => {
                let c = &l.capture_to_brake;
                let _ = writeln!(
                    s,
                    "latency capture->brake over {}: mean {:.3} s, p50 {:.3}, p95 {:.3}, max {:.3}",
                    c.count, c.mean, c.p50, c.p95, c.max
                );
                if let Some(o) = &l.onset_to_brake {
                    let _ = writeln!(
                        s,
                        "latency onset->brake over {}: mean {:.3} s, p50 {:.3}, p95 {:.3}, max {:.3}",
                        o.count, o.mean, o.p50, o.p95, o.max
                    );
                }
            }
            None => {
                let _ = writeln!(s, "latency: no emergency-brake triggers");
            }
        }
        let _ = writeln!(s, "timeline:");
        for e in &self.timeline {
            let what = match &e.kind {
                EventKind::Gateway { event } => format!("gateway {event:?}"),
                EventKind::Scenario { action } => format!("scenario {action:?}"),
                EventKind::EmergencyBrake { frame, capture_time } => {
                    format!("emergency brake on frame {frame} (captured {capture_time:.3} s)")
                }
                EventKind::Terminated { reason } => format!("terminated: {reason}"),
            };
            let _ = writeln!(s, "  {:>9.3} s  tick {:>6}  {what}", e.time, e.tick);
        }
        s
    }

    /// Plot-ready `time,gap` series.
    pub fn gap_csv(&self) -> String {
        let mut s = String::from("time,gap\n");
        for (t, g) in &self.gap_series {
            let _ = writeln!(s, "{t},{g}");
        }
        s
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_vec_pretty(self).expect("report serializes");
        std::fs::write(dir.join("report.json"), json)?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        std::fs::write(dir.join("gap.csv"), self.gap_csv())?;
        Ok(())
    }
}
