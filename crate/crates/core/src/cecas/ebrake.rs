//! Latched emergency brake triggered by a detected person.

use serde::{Deserialize, Serialize};

use crate::gateway::{ControlCommand, TurnSignal};
use crate::sensors::{Detection, ObjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum EbStatus {
    #[default]
    Normal,
    Braking,
}

impl EbStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EbStatus::Normal => "Normal",
            EbStatus::Braking => "Braking",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmergencyBrakeState {
    pub status: EbStatus,
    pub trigger_time: Option<f64>,
    pub trigger_frame: Option<u64>,
    /// Capture stamp of the frame that caused the trigger.
    pub trigger_capture_time: Option<f64>,
    pub trigger_distance: f64,
}

impl EmergencyBrakeState {
    pub fn new(trigger_distance: f64) -> Self {
        Self {
            status: EbStatus::Normal,
            trigger_time: None,
            trigger_frame: None,
            trigger_capture_time: None,
            trigger_distance,
        }
    }

    /// Scenario reset or manual override: back to Normal.
    pub fn reset(&mut self) {
        *self = Self::new(self.trigger_distance);
    }
}

/// Pedal and signal override applied on top of the lane-keeping command while
/// braking. Steering is left to lane keeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakeOverride;

impl BrakeOverride {
    pub fn apply(&self, cmd: &ControlCommand) -> ControlCommand {
        ControlCommand {
            throttle: 0.0,
            brake: 1.0,
            turn_signal: TurnSignal::Hazard,
            ..*cmd
        }
    }
}

/// One evaluation per control cycle with the held perception result.
pub fn emergency_brake_update(
    state: &EmergencyBrakeState,
    perception: Option<&Detection>,
    now: f64,
) -> (EmergencyBrakeState, Option<BrakeOverride>) {
    let mut next = *state;
    if next.status == EbStatus::Normal {
        if let Some(det) = perception {
            let hit = det
                .objects
                .iter()
                .any(|o| o.class == ObjectClass::Person && o.distance <= state.trigger_distance);
            if hit {
                next.status = EbStatus::Braking;
                next.trigger_time = Some(now);
                next.trigger_frame = Some(det.frame_id);
                next.trigger_capture_time = Some(det.capture_time);
            }
        }
    }
    let ovr = (next.status == EbStatus::Braking).then_some(BrakeOverride);
    (next, ovr)
}
