//! Vehicle motion gateway: two redundant E2E-protected control channels,
//! validity inspection, primary/fallback arbitration and the operating-mode
//! state machine with manual override and emergency stop.

mod channel;
mod command;
pub mod crc;
mod frame;
mod mode;

use serde::{Deserialize, Serialize};

pub use channel::{decode_and_check, Channel, ChannelState, Verdict};
pub use command::{ControlCommand, TurnSignal, COMMAND_PAYLOAD_LEN};
pub use frame::{
    encode_frame, frame_crc, E2EFrame, DATA_ID_CONTROL_PRIMARY, DATA_ID_CONTROL_SECONDARY,
    DATA_ID_EMERGENCY_STOP, DATA_ID_MODE_REQUEST, DATA_ID_VEHICLE_STATE, FRAME_OVERHEAD,
    MAX_PAYLOAD,
};
pub use mode::{set_mode, GatewayMode, ModeRequest, ModeSource};

use crate::error::IllegalTransition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub rx_timeout: f64,
    pub fault_threshold: u32,
    pub handover_speed: f64,
    pub fallback_throttle_cap: f64,
    /// Fraction of `max_steer` available on the fallback channel.
    pub fallback_steer_fraction: f64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            rx_timeout: 0.100,
            fault_threshold: 3,
            handover_speed: 1.0,
            fallback_throttle_cap: 0.3,
            fallback_steer_fraction: 0.5,
        }
    }
}

/// Authority caps applied to forwarded commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandLimits {
    pub throttle_max: f64,
    pub steer_max: f64,
}

impl CommandLimits {
    pub fn apply(&self, cmd: &ControlCommand) -> ControlCommand {
        ControlCommand {
            throttle: cmd.throttle.min(self.throttle_max),
            steer: cmd.steer.clamp(-self.steer_max, self.steer_max),
            ..*cmd
        }
    }

    pub fn admits(&self, cmd: &ControlCommand) -> bool {
        cmd.throttle <= self.throttle_max && cmd.steer.abs() <= self.steer_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arbitration {
    pub active: Option<Channel>,
    pub mode: GatewayMode,
    pub limits: Option<CommandLimits>,
}

/// Picks the channel that drives the vehicle. Only the externally controlled
/// modes are affected; manual drive and emergency stop pass through.
pub fn arbitrate(
    primary: &ChannelState,
    secondary: &ChannelState,
    mode: GatewayMode,
    cfg: &GatewayConfig,
    max_steer: f64,
) -> Arbitration {
    match mode {
        GatewayMode::ManualDrive | GatewayMode::EmergencyStop => Arbitration {
            active: None,
            mode,
            limits: None,
        },
        GatewayMode::ExternalControl | GatewayMode::FallbackLimited => {
            if primary.alive {
                Arbitration {
                    active: Some(Channel::Primary),
                    mode: GatewayMode::ExternalControl,
                    limits: None,
                }
            } else if secondary.alive {
                Arbitration {
                    active: Some(Channel::Secondary),
                    mode: GatewayMode::FallbackLimited,
                    limits: Some(CommandLimits {
                        throttle_max: cfg.fallback_throttle_cap,
                        steer_max: cfg.fallback_steer_fraction * max_steer,
                    }),
                }
            } else {
                Arbitration {
                    active: None,
                    mode: GatewayMode::EmergencyStop,
                    limits: None,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GatewayEvent {
    ModeChanged {
        time: f64,
        from: GatewayMode,
        to: GatewayMode,
        cause: String,
    },
    ChannelSwitch {
        time: f64,
        from: Option<Channel>,
        to: Option<Channel>,
    },
    RequestRejected {
        time: f64,
        from: GatewayMode,
        request: ModeRequest,
        source: ModeSource,
    },
    FrameFault {
        time: f64,
        channel: Option<Channel>,
        reason: String,
    },
    CommandsSuppressed {
        time: f64,
        seq: u32,
    },
    EmergencyStop {
        time: f64,
        cause: String,
    },
}

/// What the gateway hands to the vehicle for one control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatewayOutput {
    pub command: ControlCommand,
    pub mode: GatewayMode,
    pub active: Option<Channel>,
    /// True when `command` came from a frame received this cycle (or from the
    /// driver / the emergency-stop substitution) rather than being held over.
    pub fresh: bool,
}

/// Gateway state machine. Owned by a single thread; frames from both channels
/// are fed in arrival order, then `cycle` produces the command for the tick.
#[derive(Debug, Clone)]
pub struct Gateway {
    cfg: GatewayConfig,
    max_steer: f64,
    mode: GatewayMode,
    primary: ChannelState,
    secondary: ChannelState,
    pending: [Option<ControlCommand>; 2],
    active: Option<Channel>,
    last_forwarded: ControlCommand,
    suppressing: bool,
    events: Vec<GatewayEvent>,
}

fn slot(ch: Channel) -> usize {
    match ch {
        Channel::Primary => 0,
        Channel::Secondary => 1,
    }
}

impl Gateway {
    pub fn new(cfg: GatewayConfig, max_steer: f64, now: f64) -> Self {
        Self {
            cfg,
            max_steer,
            mode: GatewayMode::ManualDrive,
            primary: ChannelState::new(Channel::Primary, now),
            secondary: ChannelState::new(Channel::Secondary, now),
            pending: [None, None],
            active: None,
            last_forwarded: ControlCommand::neutral(),
            suppressing: false,
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn channel(&self, ch: Channel) -> &ChannelState {
        match ch {
            Channel::Primary => &self.primary,
            Channel::Secondary => &self.secondary,
        }
    }

    fn channel_mut(&mut self, ch: Channel) -> &mut ChannelState {
        match ch {
            Channel::Primary => &mut self.primary,
            Channel::Secondary => &mut self.secondary,
        }
    }

    pub fn events(&self) -> &[GatewayEvent] {
        &self.events
    }

    pub fn drain_events(&mut self) -> Vec<GatewayEvent> {
        std::mem::take(&mut self.events)
    }

    /// Feeds raw frame bytes as they came off the wire. Control frames are
    /// routed by data ID; mode requests and emergency stops act immediately.
    pub fn receive_bytes(&mut self, bytes: &[u8], now: f64, speed: f64) -> Option<Verdict> {
        let frame = match E2EFrame::from_bytes(bytes) {
            Ok(f) => f,
            Err(e) => {
                self.events.push(GatewayEvent::FrameFault {
                    time: now,
                    channel: None,
                    reason: e.to_string(),
                });
                return None;
            }
        };
        self.receive_frame(&frame, now, speed)
    }

    pub fn receive_frame(&mut self, frame: &E2EFrame, now: f64, speed: f64) -> Option<Verdict> {
        match frame.data_id {
            DATA_ID_CONTROL_PRIMARY => Some(self.receive_control(Channel::Primary, frame, now)),
            DATA_ID_CONTROL_SECONDARY => {
                Some(self.receive_control(Channel::Secondary, frame, now))
            }
            DATA_ID_MODE_REQUEST => {
                if !frame.crc_ok() || frame.payload.len() != 2 {
                    self.events.push(GatewayEvent::FrameFault {
                        time: now,
                        channel: None,
                        reason: "bad mode request frame".into(),
                    });
                    return Some(Verdict::CrcFault);
                }
                if let (Some(req), Some(src)) = (
                    ModeRequest::from_code(frame.payload[0]),
                    ModeSource::from_code(frame.payload[1]),
                ) {
                    let _ = self.request_mode(req, src, speed, now);
                }
                Some(Verdict::Ok)
            }
            DATA_ID_EMERGENCY_STOP => {
                if frame.crc_ok() {
                    self.emergency_stop(now, "emergency stop frame");
                    Some(Verdict::Ok)
                } else {
                    Some(Verdict::CrcFault)
                }
            }
            _ => None,
        }
    }

    /// Runs the E2E check for a control frame and, if it passes, decodes and
    /// range-checks the command for this cycle.
    pub fn receive_control(&mut self, ch: Channel, frame: &E2EFrame, now: f64) -> Verdict {
        let cfg = self.cfg;
        let max_steer = self.max_steer;
        let state = *self.channel(ch);
        let (verdict, mut next) = decode_and_check(frame, &state, now, &cfg);
        if verdict == Verdict::Ok {
            match ControlCommand::from_payload(&frame.payload, max_steer) {
                Ok(cmd) => self.pending[slot(ch)] = Some(cmd),
                Err(e) => {
                    next.record_fault(now, &cfg);
                    self.events.push(GatewayEvent::FrameFault {
                        time: now,
                        channel: Some(ch),
                        reason: e.to_string(),
                    });
                }
            }
        } else {
            self.events.push(GatewayEvent::FrameFault {
                time: now,
                channel: Some(ch),
                reason: format!("{verdict:?}"),
            });
        }
        *self.channel_mut(ch) = next;
        verdict
    }

    pub fn request_mode(
        &mut self,
        request: ModeRequest,
        source: ModeSource,
        speed: f64,
        now: f64,
    ) -> Result<GatewayMode, IllegalTransition> {
        match set_mode(self.mode, request, source, speed, self.cfg.handover_speed) {
            Ok(next) => {
                if next == GatewayMode::EmergencyStop {
                    self.emergency_stop(now, &format!("{source:?} request"));
                } else {
                    self.change_mode(next, now, &format!("{source:?} request"));
                }
                Ok(next)
            }
            Err(e) => {
                self.events.push(GatewayEvent::RequestRejected {
                    time: now,
                    from: e.from,
                    request,
                    source,
                });
                Err(e)
            }
        }
    }

    /// Latches EmergencyStop and notes the bench stop. From now on every cycle
    /// substitutes a full-brake command until a bench reset.
    pub fn emergency_stop(&mut self, now: f64, cause: &str) {
        if self.mode != GatewayMode::EmergencyStop {
            self.change_mode(GatewayMode::EmergencyStop, now, cause);
            self.events.push(GatewayEvent::EmergencyStop {
                time: now,
                cause: cause.to_string(),
            });
        }
    }

    fn change_mode(&mut self, to: GatewayMode, now: f64, cause: &str) {
        if to != self.mode {
            self.events.push(GatewayEvent::ModeChanged {
                time: now,
                from: self.mode,
                to,
                cause: cause.to_string(),
            });
            if to != GatewayMode::EmergencyStop {
                self.suppressing = false;
            }
            self.mode = to;
        }
    }

    fn set_active(&mut self, active: Option<Channel>, now: f64) {
        if active != self.active {
            self.events.push(GatewayEvent::ChannelSwitch {
                time: now,
                from: self.active,
                to: active,
            });
            self.active = active;
        }
    }

    /// Produces the command forwarded to the vehicle for the cycle at `now`.
    /// `driver` is the manual input, used in ManualDrive.
    pub fn cycle(&mut self, now: f64, driver: &ControlCommand) -> GatewayOutput {
        let cfg = self.cfg;
        self.primary.refresh(now, &cfg);
        self.secondary.refresh(now, &cfg);
        let arb = arbitrate(&self.primary, &self.secondary, self.mode, &cfg, self.max_steer);
        if arb.mode == GatewayMode::EmergencyStop && self.mode != GatewayMode::EmergencyStop {
            self.emergency_stop(now, "both channels lost");
        } else {
            self.change_mode(arb.mode, now, "channel arbitration");
        }
        self.set_active(arb.active, now);

        let pending = std::mem::take(&mut self.pending);
        let (command, fresh) = match self.mode {
            GatewayMode::EmergencyStop => {
                if let Some(cmd) = pending.iter().flatten().next() {
                    if !self.suppressing {
                        self.events.push(GatewayEvent::CommandsSuppressed {
                            time: now,
                            seq: cmd.seq,
                        });
                        self.suppressing = true;
                    }
                }
                let seq = self.last_forwarded.seq;
                (
                    ControlCommand::full_brake(self.last_forwarded.steer, now, seq),
                    true,
                )
            }
            GatewayMode::ManualDrive => (self.sanitize(driver), true),
            GatewayMode::ExternalControl | GatewayMode::FallbackLimited => {
                let ch = arb.active.expect("external modes have an active channel");
                let (cmd, fresh) = match pending[slot(ch)] {
                    Some(c) => (c, true),
                    None => (self.last_forwarded, false),
                };
                match arb.limits {
                    Some(l) => (l.apply(&cmd), fresh),
                    None => (cmd, fresh),
                }
            }
        };
        self.last_forwarded = command;
        GatewayOutput {
            command,
            mode: self.mode,
            active: self.active,
            fresh,
        }
    }

    /// Clamps a driver input into the actuator ranges; NaN falls back to zero.
    fn sanitize(&self, cmd: &ControlCommand) -> ControlCommand {
        let unit = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        ControlCommand {
            throttle: unit(cmd.throttle),
            brake: unit(cmd.brake),
            steer: if cmd.steer.is_finite() {
                cmd.steer.clamp(-self.max_steer, self.max_steer)
            } else {
                0.0
            },
            ..*cmd
        }
    }

    /// Limits in force for the current mode, if any.
    pub fn limits(&self) -> Option<CommandLimits> {
        (self.mode == GatewayMode::FallbackLimited).then_some(CommandLimits {
            throttle_max: self.cfg.fallback_throttle_cap,
            steer_max: self.cfg.fallback_steer_fraction * self.max_steer,
        })
    }
}

/// Sender-side E2E framing for one data ID: keeps the alive counter.
#[derive(Debug, Clone)]
pub struct FrameSender {
    data_id: u16,
    counter: u8,
}

impl FrameSender {
    pub fn new(data_id: u16) -> Self {
        Self {
            data_id,
            counter: 0,
        }
    }

    pub fn data_id(&self) -> u16 {
        self.data_id
    }

    pub fn next_frame(&mut self, payload: &[u8]) -> Result<E2EFrame, crate::error::FrameError> {
        let f = encode_frame(self.data_id, self.counter, payload)?;
        self.counter = self.counter.wrapping_add(1);
        Ok(f)
    }
}

pub fn mode_request_payload(request: ModeRequest, source: ModeSource) -> [u8; 2] {
    [request.code(), source.code()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sds_cmd(throttle: f64, steer: f64, seq: u32) -> ControlCommand {
        ControlCommand {
            throttle,
            brake: 0.0,
            steer,
            turn_signal: TurnSignal::Off,
            issued_at: 0.0,
            seq,
        }
    }

    fn external_gateway() -> Gateway {
        let mut gw = Gateway::new(GatewayConfig::default(), 0.5, 0.0);
        gw.request_mode(ModeRequest::ExternalControl, ModeSource::Sds, 0.0, 0.0)
            .unwrap();
        gw
    }

    #[test]
    fn arbitration_examples() {
        let cfg = GatewayConfig::default();
        let alive = ChannelState::new(Channel::Primary, 0.0);
        let dead = ChannelState {
            alive: false,
            ..alive
        };
        let a = arbitrate(&alive, &alive, GatewayMode::ExternalControl, &cfg, 0.5);
        assert_eq!(a.active, Some(Channel::Primary));
        assert_eq!(a.limits, None);

        let a = arbitrate(&dead, &alive, GatewayMode::ExternalControl, &cfg, 0.5);
        assert_eq!(a.active, Some(Channel::Secondary));
        assert_eq!(a.mode, GatewayMode::FallbackLimited);
        let l = a.limits.unwrap();
        assert_eq!(l.throttle_max, 0.3);
        assert_eq!(l.steer_max, 0.25);

        let a = arbitrate(&dead, &dead, GatewayMode::ExternalControl, &cfg, 0.5);
        assert_eq!(a.mode, GatewayMode::EmergencyStop);
    }

    #[test]
    fn primary_drives_when_alive() {
        let mut gw = external_gateway();
        let mut p = FrameSender::new(DATA_ID_CONTROL_PRIMARY);
        let mut s = FrameSender::new(DATA_ID_CONTROL_SECONDARY);
        let t = 0.02;
        gw.receive_frame(&p.next_frame(&sds_cmd(0.8, 0.4, 1).to_payload()).unwrap(), t, 0.0);
        gw.receive_frame(&s.next_frame(&sds_cmd(0.1, 0.0, 1).to_payload()).unwrap(), t, 0.0);
        let out = gw.cycle(t, &ControlCommand::neutral());
        assert_eq!(out.mode, GatewayMode::ExternalControl);
        assert_eq!(out.active, Some(Channel::Primary));
        assert_eq!(out.command.throttle, 0.8);
        assert!(out.fresh);
    }

    #[test]
    fn primary_loss_falls_back_with_caps() {
        let mut gw = external_gateway();
        let mut p = FrameSender::new(DATA_ID_CONTROL_PRIMARY);
        let mut s = FrameSender::new(DATA_ID_CONTROL_SECONDARY);
        let mut switched_at = None;
        for k in 1..40u32 {
            let t = k as f64 * 0.02;
            let cmd = sds_cmd(0.9, 0.45, k).to_payload();
            if t < 0.2 {
                gw.receive_frame(&p.next_frame(&cmd).unwrap(), t, 5.0);
            }
            gw.receive_frame(&s.next_frame(&cmd).unwrap(), t, 5.0);
            let out = gw.cycle(t, &ControlCommand::neutral());
            if out.mode == GatewayMode::FallbackLimited {
                switched_at.get_or_insert(t);
                assert!(out.command.throttle <= 0.3);
                assert!(out.command.steer.abs() <= 0.25);
            }
        }
        let t = switched_at.expect("fallback engaged");
        // last primary frame at 0.18 s; dead once 100 ms have elapsed
        assert!(t - 0.18 <= 0.1 + 0.02 + 1e-9, "switched at {t}");
        assert!(gw
            .events()
            .iter()
            .any(|e| matches!(e, GatewayEvent::ChannelSwitch { to: Some(Channel::Secondary), .. })));
    }

    #[test]
    fn both_lost_triggers_emergency_stop() {
        let mut gw = external_gateway();
        let mut out = gw.cycle(0.02, &ControlCommand::neutral());
        for k in 2..20 {
            out = gw.cycle(k as f64 * 0.02, &ControlCommand::neutral());
        }
        assert_eq!(out.mode, GatewayMode::EmergencyStop);
        assert_eq!(out.command.brake, 1.0);
        assert_eq!(out.command.throttle, 0.0);
        assert_eq!(out.command.turn_signal, TurnSignal::Hazard);
        assert!(gw.events().iter().any(|e| matches!(e, GatewayEvent::EmergencyStop { .. })));
    }

    #[test]
    fn commands_after_stop_are_suppressed() {
        let mut gw = external_gateway();
        let mut p = FrameSender::new(DATA_ID_CONTROL_PRIMARY);
        gw.emergency_stop(0.0, "test");
        for k in 1..5u32 {
            let t = k as f64 * 0.02;
            gw.receive_frame(&p.next_frame(&sds_cmd(1.0, 0.1, k).to_payload()).unwrap(), t, 0.0);
            let out = gw.cycle(t, &ControlCommand::neutral());
            assert_eq!(out.command.brake, 1.0);
            assert_eq!(out.command.throttle, 0.0);
        }
        let suppressed = gw
            .events()
            .iter()
            .filter(|e| matches!(e, GatewayEvent::CommandsSuppressed { .. }))
            .count();
        assert_eq!(suppressed, 1);
        assert!(gw
            .request_mode(ModeRequest::ExternalControl, ModeSource::Sds, 0.0, 0.1)
            .is_err());
        gw.request_mode(ModeRequest::ManualDrive, ModeSource::Bench, 0.0, 0.2)
            .unwrap();
        assert_eq!(gw.mode(), GatewayMode::ManualDrive);
    }

    #[test]
    fn emergency_stop_holds_steer() {
        let mut gw = external_gateway();
        let mut p = FrameSender::new(DATA_ID_CONTROL_PRIMARY);
        gw.receive_frame(&p.next_frame(&sds_cmd(0.2, 0.3, 1).to_payload()).unwrap(), 0.02, 0.0);
        gw.cycle(0.02, &ControlCommand::neutral());
        gw.emergency_stop(0.03, "bench");
        let out = gw.cycle(0.04, &ControlCommand::neutral());
        assert_eq!(out.command.steer, 0.3);
    }

    #[test]
    fn manual_drive_forwards_clamped_driver_input() {
        let mut gw = Gateway::new(GatewayConfig::default(), 0.5, 0.0);
        let driver = ControlCommand {
            throttle: 1.5,
            steer: -2.0,
            ..ControlCommand::neutral()
        };
        let out = gw.cycle(0.02, &driver);
        assert_eq!(out.mode, GatewayMode::ManualDrive);
        assert_eq!(out.command.throttle, 1.0);
        assert_eq!(out.command.steer, -0.5);
    }

    #[test]
    fn mode_and_stop_frames() {
        let mut gw = Gateway::new(GatewayConfig::default(), 0.5, 0.0);
        let mut m = FrameSender::new(DATA_ID_MODE_REQUEST);
        let f = m
            .next_frame(&mode_request_payload(ModeRequest::ExternalControl, ModeSource::Sds))
            .unwrap();
        gw.receive_bytes(&f.to_bytes(), 0.0, 0.0);
        assert_eq!(gw.mode(), GatewayMode::ExternalControl);
        let mut e = FrameSender::new(DATA_ID_EMERGENCY_STOP);
        let f = e.next_frame(&[]).unwrap();
        gw.receive_bytes(&f.to_bytes(), 0.1, 0.0);
        assert_eq!(gw.mode(), GatewayMode::EmergencyStop);
    }

    #[test]
    fn invalid_payload_counts_as_fault() {
        let mut gw = external_gateway();
        let mut p = FrameSender::new(DATA_ID_CONTROL_PRIMARY);
        let bad = sds_cmd(2.0, 0.0, 1).to_payload();
        gw.receive_frame(&p.next_frame(&bad).unwrap(), 0.02, 0.0);
        assert_eq!(gw.channel(Channel::Primary).consecutive_faults, 1);
        let out = gw.cycle(0.02, &ControlCommand::neutral());
        assert!(!out.fresh);
    }
}
