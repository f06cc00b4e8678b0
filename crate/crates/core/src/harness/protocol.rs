//! Wire protocol between the world, the central car server and the gateway:
//! JSON messages with a `type` discriminator, each preceded by its length as
//! a little-endian u32.

use std::io::{ErrorKind, Read, Write};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::cecas::{CecasTelemetry, LeadObservation};
use crate::dynamics::EgoVehicleState;
use crate::gateway::{ControlCommand, E2EFrame, GatewayEvent, GatewayOutput, ModeRequest, ModeSource};
use crate::sensors::Detection;

use super::scenario::ScenarioConfig;
use super::stage::FaultPlan;
use super::HarnessError;

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on one message body.
pub const MAX_MESSAGE_LEN: u32 = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    World,
    Cecas,
    Gateway,
}

/// Configuration a peer needs to take part in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerSetup {
    pub scenario: ScenarioConfig,
    pub lockstep: bool,
    pub transport_delay: f64,
    pub faults: FaultPlan,
    /// Set when the central car server must send its frames to a gateway peer.
    pub gateway_addr: Option<String>,
}

/// Everything the peers need for one control cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickState {
    pub tick: u64,
    pub time: f64,
    /// Clock used for perception and timeouts.
    pub now: f64,
    pub ego: EgoVehicleState,
    pub lead: Option<LeadObservation>,
    pub reset_eb: bool,
    pub driver: ControlCommand,
    pub mode_requests: Vec<(ModeRequest, ModeSource)>,
    pub bench_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReply {
    pub tick: u64,
    pub from: Role,
    #[serde(default)]
    pub telemetry: Option<CecasTelemetry>,
    /// E2E frames as hex strings, when the world hosts the gateway.
    #[serde(default)]
    pub frames: Vec<String>,
    #[serde(default)]
    pub output: Option<GatewayOutput>,
    /// Set when the controller could not produce a command (ego off track).
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    Hello {
        role: Role,
        version: u32,
        #[serde(default)]
        setup: Option<Box<PeerSetup>>,
    },
    TickState(Box<TickState>),
    Detection {
        detection: Detection,
        /// Sender wall clock, seconds since the run started.
        wall_time: f64,
    },
    ControlReply(Box<ControlReply>),
    GatewayFrame {
        tick: u64,
        frames: Vec<String>,
    },
    ModeEvent {
        tick: u64,
        event: GatewayEvent,
    },
    Bye {
        reason: String,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::TickState(_) => "TickState",
            Message::Detection { .. } => "Detection",
            Message::ControlReply(_) => "ControlReply",
            Message::GatewayFrame { .. } => "GatewayFrame",
            Message::ModeEvent { .. } => "ModeEvent",
            Message::Bye { .. } => "Bye",
        }
    }

    pub fn tick(&self) -> Option<u64> {
        match self {
            Message::TickState(t) => Some(t.tick),
            Message::ControlReply(r) => Some(r.tick),
            Message::GatewayFrame { tick, .. } | Message::ModeEvent { tick, .. } => Some(*tick),
            _ => None,
        }
    }
}

pub fn frames_to_hex(frames: &[E2EFrame]) -> Vec<String> {
    frames.iter().map(E2EFrame::to_hex).collect()
}

pub fn frames_from_hex(frames: &[String]) -> Result<Vec<E2EFrame>, HarnessError> {
    frames
        .iter()
        .map(|h| {
            E2EFrame::from_hex(h)
                .map_err(|e| HarnessError::ProtocolViolation(format!("bad frame {h:?}: {e}")))
        })
        .collect()
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("messages serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), HarnessError> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads one message. `Ok(None)` on a clean end of stream between messages.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, HarnessError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_MESSAGE_LEN {
        return Err(HarnessError::ProtocolViolation(format!("message of {len} bytes")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            HarnessError::ProtocolViolation("stream ended inside a message".into())
        } else {
            e.into()
        }
    })?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| HarnessError::ProtocolViolation(format!("undecodable message: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub peer: Role,
    pub direction: Direction,
    pub kind: String,
    pub tick: Option<u64>,
}

/// Ordered record of every message the world exchanged, across all peers.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<TranscriptEntry>>>);

impl Transcript {
    pub fn record(&self, peer: Role, direction: Direction, msg: &Message) {
        self.0.lock().expect("transcript lock").push(TranscriptEntry {
            peer,
            direction,
            kind: msg.kind().to_string(),
            tick: msg.tick(),
        });
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.0.lock().expect("transcript lock").clone()
    }
}

/// Lockstep liveness: no TickState for tick N+1 goes out before every peer
/// that was sent tick N has returned its ControlReply for tick N.
pub fn check_lockstep(entries: &[TranscriptEntry]) -> Result<(), String> {
    use std::collections::{BTreeMap, BTreeSet};
    let mut sent: BTreeMap<u64, BTreeSet<Role>> = BTreeMap::new();
    let mut replied: BTreeMap<u64, BTreeSet<Role>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let Some(tick) = e.tick else { continue };
        match (e.direction, e.kind.as_str()) {
            (Direction::Sent, "TickState") => {
                if let Some(prev) = tick.checked_sub(1) {
                    let want = sent.get(&prev).cloned().unwrap_or_default();
                    let got = replied.get(&prev).cloned().unwrap_or_default();
                    if !want.is_subset(&got) {
                        return Err(format!(
                            "entry {i}: TickState {tick} to {:?} before all replies for tick {prev}",
                            e.peer
                        ));
                    }
                }
                sent.entry(tick).or_default().insert(e.peer);
            }
            (Direction::Received, "ControlReply") => {
                replied.entry(tick).or_default().insert(e.peer);
            }
            _ => {}
        }
    }
    Ok(())
}
