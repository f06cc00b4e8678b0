//! Scenario definitions: map, duration, parameters, initial actors and the
//! timed event script.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cecas::{AccParams, CecasConfig, LkaParams, DEFAULT_TRIGGER_DISTANCE};
use crate::dynamics::VehicleParams;
use crate::gateway::{GatewayConfig, ModeRequest, ModeSource, TurnSignal};
use crate::map::{bundled_map, load_map, WaypointPath, OVAL_588, STRAIGHT_1KM};
use crate::sensors::{Cadence, CameraConfig};
use crate::world::{ActorKind, DEFAULT_TICK_PERIOD};

use super::HarnessError;

pub const COMFORT_PERIOD: f64 = 0.050;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    ManualDrive,
    AccLka,
    EmergencyBrake,
}

/// Initial placement of a scripted actor relative to the ego start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub kind: ActorKind,
    /// Bumper-to-bumper gap ahead of the ego front, along the centerline.
    pub gap: f64,
    #[serde(default)]
    pub lateral_offset: f64,
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum EventAction {
    /// A person steps onto the road `gap` meters ahead of the ego front.
    SpawnPedestrian {
        gap: f64,
        #[serde(default)]
        lateral_offset: f64,
    },
    SpawnActor {
        actor: ActorSpec,
    },
    RemovePedestrians,
    ResetEmergencyBrake,
    /// Extra perception delay from compute load; applies to frames captured
    /// from now on.
    SetExtraLoad {
        delay: f64,
    },
    SetLeadMotion {
        speed: f64,
        #[serde(default)]
        accel: f64,
    },
    DriverInput {
        throttle: f64,
        brake: f64,
        steer: f64,
        #[serde(default)]
        turn_signal: TurnSignal,
    },
    RequestMode {
        request: ModeRequest,
        source: ModeSource,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub at: f64,
    #[serde(flatten)]
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioKind,
    pub map: String,
    pub duration: f64,
    pub seed: u64,
    #[serde(default = "default_tick_period")]
    pub tick_period: f64,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub start_speed: f64,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub acc: AccParams,
    #[serde(default)]
    pub lka: LkaParams,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default = "default_trigger_distance")]
    pub trigger_distance: f64,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub event_script: Vec<TimedEvent>,
}

fn default_tick_period() -> f64 {
    DEFAULT_TICK_PERIOD
}

fn default_trigger_distance() -> f64 {
    DEFAULT_TRIGGER_DISTANCE
}

/// Names accepted by [`ScenarioConfig::preset`].
pub const PRESET_NAMES: &[&str] = &[
    "manual_drive",
    "acc_lka",
    "acc_lka_oval",
    "emergency_brake",
];

impl ScenarioConfig {
    fn base(name: ScenarioKind, map: &str, duration: f64) -> Self {
        Self {
            name,
            map: map.to_string(),
            duration,
            seed: 0,
            tick_period: DEFAULT_TICK_PERIOD,
            start_s: 0.0,
            start_speed: 0.0,
            camera: CameraConfig::default(),
            vehicle: VehicleParams::default(),
            acc: AccParams::default(),
            lka: LkaParams::default(),
            gateway: GatewayConfig::default(),
            trigger_distance: DEFAULT_TRIGGER_DISTANCE,
            actors: Vec::new(),
            event_script: Vec::new(),
        }
    }

    /// Driver accelerates gently, holds, then brakes to a stop.
    pub fn manual_drive() -> Self {
        let input = |at, throttle, brake| TimedEvent {
            at,
            action: EventAction::DriverInput {
                throttle,
                brake,
                steer: 0.0,
                turn_signal: TurnSignal::Off,
            },
        };
        Self {
            event_script: vec![input(0.0, 0.3, 0.0), input(8.0, 0.05, 0.0), input(20.0, 0.0, 0.4)],
            ..Self::base(ScenarioKind::ManualDrive, STRAIGHT_1KM, 30.0)
        }
    }

    /// Car following from standstill behind a lead at 30 km/h, 50 m ahead.
    pub fn acc_lka() -> Self {
        Self {
            actors: vec![ActorSpec {
                kind: ActorKind::LeadVehicle,
                gap: 50.0,
                lateral_offset: 0.0,
                speed: 8.333,
                accel: 0.0,
            }],
            ..Self::base(ScenarioKind::AccLka, STRAIGHT_1KM, 60.0)
        }
    }

    /// Same following task on the closed oval, for lane-keeping accuracy.
    pub fn acc_lka_oval() -> Self {
        Self {
            map: OVAL_588.to_string(),
            duration: 120.0,
            ..Self::acc_lka()
        }
    }

    /// Cruise from standstill; a person appears 24 m ahead at `appear_at`.
    pub fn emergency_brake(appear_at: f64) -> Self {
        Self {
            event_script: vec![TimedEvent {
                at: appear_at,
                action: EventAction::SpawnPedestrian {
                    gap: 24.0,
                    lateral_offset: 0.0,
                },
            }],
            ..Self::base(ScenarioKind::EmergencyBrake, STRAIGHT_1KM, appear_at + 4.0)
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "manual_drive" => Self::manual_drive(),
            "acc_lka" => Self::acc_lka(),
            "acc_lka_oval" => Self::acc_lka_oval(),
            "emergency_brake" => Self::emergency_brake(10.0),
            _ => return None,
        })
    }

    /// A preset name or a path to a JSON scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self, HarnessError> {
        if let Some(s) = Self::preset(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(HarnessError::Config(format!(
                "unknown scenario {name_or_path:?} (presets: {})",
                PRESET_NAMES.join(", ")
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let s: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Ok(s)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.tick_period).round() as u64
    }

    pub fn cadence(&self) -> Result<Cadence, HarnessError> {
        Ok(Cadence::from_periods(self.tick_period, COMFORT_PERIOD)?)
    }

    pub fn cecas_config(&self) -> CecasConfig {
        CecasConfig {
            vehicle: self.vehicle,
            acc: self.acc,
            lka: self.lka,
            trigger_distance: self.trigger_distance,
            request_external: self.name != ScenarioKind::ManualDrive,
        }
    }

    pub fn load_path(&self) -> Result<WaypointPath, HarnessError> {
        if let Some(p) = bundled_map(&self.map) {
            return Ok(p);
        }
        let text = std::fs::read_to_string(&self.map)
            .map_err(|e| HarnessError::Config(format!("map {:?}: {e}", self.map)))?;
        Ok(load_map(&text)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.tick_period.is_finite() && self.tick_period > 0.0) {
            return bad(format!("tick_period must be > 0, got {}", self.tick_period));
        }
        if self.total_ticks() == 0 {
            return bad("duration is shorter than one tick".into());
        }
        if !(self.start_speed.is_finite() && self.start_speed >= 0.0) || !self.start_s.is_finite() {
            return bad("start_s / start_speed must be finite, speed >= 0".into());
        }
        if !(self.trigger_distance.is_finite() && self.trigger_distance > 0.0) {
            return bad("trigger_distance must be > 0".into());
        }
        self.cadence()?;
        self.camera.validate()?;
        self.vehicle.validate()?;
        self.acc.validate()?;
        self.lka.validate()?;
        let g = &self.gateway;
        if !(g.rx_timeout > 0.0 && g.fault_threshold > 0 && g.fallback_steer_fraction > 0.0) {
            return bad("gateway timeouts and limits must be > 0".into());
        }
        self.load_path()?;
        for a in &self.actors {
            if a.kind == ActorKind::EgoVehicle {
                return bad("the ego is not a scripted actor".into());
            }
            if ![a.gap, a.lateral_offset, a.speed, a.accel].iter().all(|v| v.is_finite()) {
                return bad("actor fields must be finite".into());
            }
        }
        for e in &self.event_script {
            if !(e.at.is_finite() && e.at >= 0.0) {
                return bad(format!("event time {} must be >= 0", e.at));
            }
        }
        Ok(())
    }
}
