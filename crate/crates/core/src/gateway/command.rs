use serde::{Deserialize, Serialize};

use crate::error::CommandError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TurnSignal {
    #[default]
    Off,
    Left,
    Right,
    Hazard,
}

impl TurnSignal {
    pub fn code(self) -> u8 {
        match self {
            TurnSignal::Off => 0,
            TurnSignal::Left => 1,
            TurnSignal::Right => 2,
            TurnSignal::Hazard => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, CommandError> {
        Ok(match code {
            0 => TurnSignal::Off,
            1 => TurnSignal::Left,
            2 => TurnSignal::Right,
            3 => TurnSignal::Hazard,
            c => return Err(CommandError::TurnSignal(c)),
        })
    }
}

/// Actuation request issued once per control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
    pub turn_signal: TurnSignal,
    pub issued_at: f64,
    pub seq: u32,
}

/// Encoded payload size: four f64 fields, a u32 sequence and the signal code.
pub const COMMAND_PAYLOAD_LEN: usize = 8 * 4 + 4 + 1;

impl ControlCommand {
    pub fn neutral() -> Self {
        Self {
            throttle: 0.0,
            brake: 0.0,
            steer: 0.0,
            turn_signal: TurnSignal::Off,
            issued_at: 0.0,
            seq: 0,
        }
    }

    /// Full brake, hazard lights, steering held at `steer`.
    pub fn full_brake(steer: f64, issued_at: f64, seq: u32) -> Self {
        Self {
            throttle: 0.0,
            brake: 1.0,
            steer,
            turn_signal: TurnSignal::Hazard,
            issued_at,
            seq,
        }
    }

    pub fn validate(&self, max_steer: f64) -> Result<(), CommandError> {
        if !(self.throttle.is_finite() && (0.0..=1.0).contains(&self.throttle)) {
            return Err(CommandError::OutOfRange("throttle"));
        }
        if !(self.brake.is_finite() && (0.0..=1.0).contains(&self.brake)) {
            return Err(CommandError::OutOfRange("brake"));
        }
        if !(self.steer.is_finite() && self.steer.abs() <= max_steer) {
            return Err(CommandError::OutOfRange("steer"));
        }
        if !self.issued_at.is_finite() {
            return Err(CommandError::OutOfRange("issued_at"));
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(COMMAND_PAYLOAD_LEN);
        out.extend_from_slice(&self.throttle.to_le_bytes());
        out.extend_from_slice(&self.brake.to_le_bytes());
        out.extend_from_slice(&self.steer.to_le_bytes());
        out.extend_from_slice(&self.issued_at.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.push(self.turn_signal.code());
        out
    }

    /// Decodes and range-checks a payload; NaN and infinities are rejected.
    pub fn from_payload(bytes: &[u8], max_steer: f64) -> Result<Self, CommandError> {
        if bytes.len() != COMMAND_PAYLOAD_LEN {
            return Err(CommandError::BadLength(bytes.len()));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        let cmd = Self {
            throttle: f(0),
            brake: f(1),
            steer: f(2),
            issued_at: f(3),
            seq: u32::from_le_bytes(bytes[32..36].try_into().unwrap()),
            turn_signal: TurnSignal::from_code(bytes[36])?,
        };
        cmd.validate(max_steer)?;
        Ok(cmd)
    }
}
