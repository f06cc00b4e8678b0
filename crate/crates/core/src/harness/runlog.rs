//! Run log: one CSV row per tick plus a JSON sidecar with the configuration,
//! latency records, events and counters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cecas::EbStatus;
use crate::gateway::{Channel, GatewayEvent, GatewayMode, TurnSignal};

use super::scenario::{EventAction, ScenarioConfig};
use super::stage::{FaultPlan, StageKind};
use super::HarnessError;

pub const ROWS_FILE: &str = "run.csv";
pub const SIDECAR_FILE: &str = "run.json";

pub const CSV_HEADER: [&str; 17] = [
    "tick",
    "time",
    "x",
    "y",
    "heading",
    "speed",
    "steer",
    "throttle",
    "brake",
    "lateral_error",
    "gap",
    "mode",
    "eb_status",
    "turn_signal",
    "channel",
    "fresh",
    "perceived_distance",
];

/// Indices of the columns produced by the world and the dynamics alone.
pub const PHYSICS_COLUMNS: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Steering actuator position.
    pub steer: f64,
    /// Pedals as forwarded to the dynamics this tick.
    pub throttle: f64,
    pub brake: f64,
    pub lateral_error: f64,
    pub gap: Option<f64>,
    pub mode: GatewayMode,
    pub eb_status: EbStatus,
    /// Turn light state as latched on the comfort cadence.
    pub turn_signal: TurnSignal,
    pub channel: Option<Channel>,
    /// Whether the forwarded command was produced for this tick.
    pub fresh: bool,
    pub perceived_distance: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn signal_str(s: TurnSignal) -> &'static str {
    match s {
        TurnSignal::Off => "Off",
        TurnSignal::Left => "Left",
        TurnSignal::Right => "Right",
        TurnSignal::Hazard => "Hazard",
    }
}

fn channel_str(c: Option<Channel>) -> &'static str {
    match c {
        Some(Channel::Primary) => "primary",
        Some(Channel::Secondary) => "secondary",
        None => "",
    }
}

impl TickRow {
    /// CSV fields. Floats use the shortest representation that round-trips.
    pub fn fields(&self) -> [String; 17] {
        [
            self.tick.to_string(),
            self.time.to_string(),
            self.x.to_string(),
            self.y.to_string(),
            self.heading.to_string(),
            self.speed.to_string(),
            self.steer.to_string(),
            self.throttle.to_string(),
            self.brake.to_string(),
            self.lateral_error.to_string(),
            opt(self.gap),
            self.mode.as_str().to_string(),
            self.eb_status.as_str().to_string(),
            signal_str(self.turn_signal).to_string(),
            channel_str(self.channel).to_string(),
            u8::from(self.fresh).to_string(),
            opt(self.perceived_distance),
        ]
    }

    fn parse(rec: &csv::StringRecord, line: usize) -> Result<Self, HarnessError> {
        let bad = |col: &str| HarnessError::Config(format!("{ROWS_FILE} line {line}: bad {col}"));
        if rec.len() != CSV_HEADER.len() {
            return Err(bad("field count"));
        }
        let f = |i: usize| -> Result<f64, HarnessError> {
            rec[i].parse().map_err(|_| bad(CSV_HEADER[i]))
        };
        let of = |i: usize| -> Result<Option<f64>, HarnessError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        let mode = GatewayMode::ALL
            .into_iter()
            .find(|m| m.as_str() == &rec[11])
            .ok_or_else(|| bad("mode"))?;
        let eb_status = match &rec[12] {
            "Normal" => EbStatus::Normal,
            "Braking" => EbStatus::Braking,
            _ => return Err(bad("eb_status")),
        };
        let turn_signal = [TurnSignal::Off, TurnSignal::Left, TurnSignal::Right, TurnSignal::Hazard]
            .into_iter()
            .find(|s| signal_str(*s) == &rec[13])
            .ok_or_else(|| bad("turn_signal"))?;
        let channel = match &rec[14] {
            "primary" => Some(Channel::Primary),
            "secondary" => Some(Channel::Secondary),
            "" => None,
            _ => return Err(bad("channel")),
        };
        Ok(Self {
            tick: rec[0].parse().map_err(|_| bad("tick"))?,
            time: f(1)?,
            x: f(2)?,
            y: f(3)?,
            heading: f(4)?,
            speed: f(5)?,
            steer: f(6)?,
            throttle: f(7)?,
            brake: f(8)?,
            lateral_error: f(9)?,
            gap: of(10)?,
            mode,
            eb_status,
            turn_signal,
            channel,
            fresh: match &rec[15] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("fresh")),
            },
            perceived_distance: of(16)?,
        })
    }
}

/// Detection-to-brake timing for one emergency-brake trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub trigger_frame: u64,
    pub capture_time: f64,
    pub trigger_time: f64,
    /// First tick at which the dynamics received brake = 1.
    pub brake_applied_time: f64,
    pub latency_capture_to_brake: f64,
    /// When the person appeared in the world, if the scenario spawned one.
    pub onset_time: Option<f64>,
    pub latency_onset_to_brake: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    Gateway { event: GatewayEvent },
    Scenario { action: EventAction },
    EmergencyBrake { frame: u64, capture_time: f64 },
    Terminated { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub tick: u64,
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Termination {
    Completed,
    Diverged { tick: u64, reason: String },
    Stopped { tick: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub base_ticks: u64,
    pub control_emissions: u64,
    pub comfort_emissions: u64,
    pub camera_frames: u64,
    pub detections_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: ScenarioConfig,
    pub stage: StageKind,
    pub lockstep: bool,
    pub transport_delay: f64,
    pub faults: FaultPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub meta: RunMeta,
    pub latencies: Vec<LatencyRecord>,
    pub events: Vec<LogEvent>,
    pub termination: Termination,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub rows: Vec<TickRow>,
    pub latencies: Vec<LatencyRecord>,
    pub events: Vec<LogEvent>,
    pub termination: Termination,
    pub counters: Counters,
}

impl RunLog {
    pub fn csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.fields()).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn sidecar(&self) -> RunSidecar {
        RunSidecar {
            meta: self.meta.clone(),
            latencies: self.latencies.clone(),
            events: self.events.clone(),
            termination: self.termination.clone(),
            counters: self.counters,
        }
    }

    pub fn sidecar_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(&self.sidecar()).expect("sidecar serializes");
        v.push(b'\n');
        v
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(ROWS_FILE), self.csv_bytes())?;
        fs::write(dir.join(SIDECAR_FILE), self.sidecar_bytes())?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, HarnessError> {
        let side: RunSidecar = serde_json::from_slice(&fs::read(dir.join(SIDECAR_FILE))?)
            .map_err(|e| HarnessError::Config(format!("{SIDECAR_FILE}: {e}")))?;
        let rows = parse_rows(&fs::read(dir.join(ROWS_FILE))?)?;
        Ok(Self {
            meta: side.meta,
            rows,
            latencies: side.latencies,
            events: side.events,
            termination: side.termination,
            counters: side.counters,
        })
    }

    pub fn gateway_events(&self) -> impl Iterator<Item = (&LogEvent, &GatewayEvent)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Gateway { event } => Some((e, event)),
            _ => None,
        })
    }
}

pub fn parse_rows(bytes: &[u8]) -> Result<Vec<TickRow>, HarnessError> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header = rd
        .headers()
        .map_err(|e| HarnessError::Config(format!("{ROWS_FILE}: {e}")))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(HarnessError::Config(format!("{ROWS_FILE}: unexpected header")));
    }
    rd.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| HarnessError::Config(format!("{ROWS_FILE}: {e}")))?;
            TickRow::parse(&rec, i + 2)
        })
        .collect()
}
