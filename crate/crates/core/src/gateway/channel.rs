use serde::{Deserialize, Serialize};

use super::frame::E2EFrame;
use super::GatewayConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Primary,
    Secondary,
}

impl Channel {
    pub fn data_id(self) -> u16 {
        match self {
            Channel::Primary => super::frame::DATA_ID_CONTROL_PRIMARY,
            Channel::Secondary => super::frame::DATA_ID_CONTROL_SECONDARY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Ok,
    CrcFault,
    CounterFault,
    Timeout,
}

/// Receive-side bookkeeping for one redundant control channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel: Channel,
    pub last_counter: Option<u8>,
    /// Time of the last accepted frame; initialised to the channel's start
    /// time so a fresh channel gets one timeout window of grace.
    pub last_rx_time: f64,
    pub consecutive_faults: u32,
    pub alive: bool,
}

impl ChannelState {
    pub fn new(channel: Channel, now: f64) -> Self {
        Self {
            channel,
            last_counter: None,
            last_rx_time: now,
            consecutive_faults: 0,
            alive: true,
        }
    }

    pub fn is_alive_at(&self, now: f64, cfg: &GatewayConfig) -> bool {
        self.consecutive_faults < cfg.fault_threshold && (now - self.last_rx_time) < cfg.rx_timeout
    }

    /// Recomputes `alive` for the current time.
    pub fn refresh(&mut self, now: f64, cfg: &GatewayConfig) {
        self.alive = self.is_alive_at(now, cfg);
    }

    /// Counts a fault detected outside the E2E check (misrouted frame,
    /// undecodable bytes, payload out of range).
    pub fn record_fault(&mut self, now: f64, cfg: &GatewayConfig) {
        self.consecutive_faults = self.consecutive_faults.saturating_add(1);
        self.refresh(now, cfg);
    }
}

/// Validates one received frame against the channel history.
///
/// The CRC is checked first; a corrupted frame leaves the history untouched.
/// Counter and timeout faults still resynchronise the history to the received
/// frame so that a channel can recover after a gap.
pub fn decode_and_check(
    frame: &E2EFrame,
    state: &ChannelState,
    now: f64,
    cfg: &GatewayConfig,
) -> (Verdict, ChannelState) {
    let mut next = *state;
    let verdict = if !frame.crc_ok() {
        Verdict::CrcFault
    } else if now - state.last_rx_time >= cfg.rx_timeout {
        Verdict::Timeout
    } else if state
        .last_counter
        .is_some_and(|last| frame.counter != last.wrapping_add(1))
    {
        Verdict::CounterFault
    } else {
        Verdict::Ok
    };
    if verdict == Verdict::Ok {
        next.consecutive_faults = 0;
    } else {
        next.consecutive_faults = next.consecutive_faults.saturating_add(1);
    }
    if verdict != Verdict::CrcFault {
        next.last_counter = Some(frame.counter);
        next.last_rx_time = now;
    }
    next.refresh(now, cfg);
    (verdict, next)
}
