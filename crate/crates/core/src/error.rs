use thiserror::Error;

use crate::gateway::{GatewayMode, ModeRequest, ModeSource};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("malformed map: {0}")]
    Malformed(String),
    #[error("degenerate map: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("participant {participant} did not report for tick {tick}")]
    ParticipantMissing { participant: String, tick: u64 },
    #[error("completion evidence is for tick {got}, world is at tick {expected}")]
    StaleCompletion { expected: u64, got: u64 },
    #[error("actor {0} already exists")]
    DuplicateActor(u32),
    #[error("actor pose or speed is not finite")]
    NonFinite,
    #[error("unknown actor {0}")]
    UnknownActor(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
}

impl ParamError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid {
            name,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds the 64 byte limit")]
    PayloadTooLong(usize),
    #[error("frame truncated: {0} bytes")]
    Truncated(usize),
    #[error("length field says {declared} payload bytes, frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("invalid hex encoding")]
    Hex,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("command payload has {0} bytes")]
    BadLength(usize),
    #[error("field {0} out of range or not finite")]
    OutOfRange(&'static str),
    #[error("unknown turn signal code {0}")]
    TurnSignal(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal transition: {requester:?} requested {request:?} while in {from:?}")]
pub struct IllegalTransition {
    pub from: GatewayMode,
    pub request: ModeRequest,
    pub requester: ModeSource,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("ego is {distance:.2} m from the centerline (limit {limit:.2} m)")]
pub struct OffTrack {
    pub distance: f64,
    pub limit: f64,
}
