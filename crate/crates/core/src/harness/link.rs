//! The control path as seen from the world: in-process for the internal
//! stage, over TCP for the external and ViL stages.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::cecas::{CecasTelemetry, CentralCarServer, CycleInput};
use crate::gateway::{
    ControlCommand, E2EFrame, Gateway, GatewayEvent, GatewayMode, GatewayOutput,
};
use crate::map::WaypointPath;
use crate::sensors::Detection;

use super::protocol::{
    frames_from_hex, read_message, ControlReply, Direction, Message, PeerSetup, Role, TickState,
    Transcript, PROTOCOL_VERSION,
};
use super::scenario::ScenarioConfig;
use super::stage::FaultPlan;
use super::HarnessError;

/// How long the world waits for a lockstep reply before declaring the peer
/// unreachable.
pub const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

/// Result of one control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkReply {
    /// Controller telemetry received for this cycle, oldest first. Lockstep
    /// links return exactly one entry.
    pub telemetry: Vec<CecasTelemetry>,
    pub output: GatewayOutput,
    pub events: Vec<GatewayEvent>,
    /// The controller failed this cycle (ego off track).
    pub error: Option<String>,
}

pub trait ControlLink: Send {
    fn deliver(&mut self, detection: Detection, wall_time: f64) -> Result<(), HarnessError>;
    fn exchange(&mut self, tick: TickState) -> Result<LinkReply, HarnessError>;
    fn close(&mut self, reason: &str) -> Result<(), HarnessError>;
    fn transcript(&self) -> Option<Transcript> {
        None
    }
}

/// The gateway state machine plus fault injection at its ingress.
pub struct GatewayNode {
    gateway: Gateway,
    faults: FaultPlan,
}

impl GatewayNode {
    pub fn new(scenario: &ScenarioConfig, faults: FaultPlan) -> Self {
        Self {
            gateway: Gateway::new(scenario.gateway, scenario.vehicle.max_steer, 0.0),
            faults,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Applies bench and driver requests, ingests the frames that survive the
    /// fault plan, and cycles.
    pub fn on_tick(&mut self, ts: &TickState, frames: &[E2EFrame]) -> (GatewayOutput, Vec<GatewayEvent>) {
        let now = ts.now;
        let speed = ts.ego.speed;
        for &(req, src) in &ts.mode_requests {
            let _ = self.gateway.request_mode(req, src, speed, now);
        }
        if ts.bench_stop {
            self.gateway.emergency_stop(now, "Bench request");
        }
        for f in frames {
            if !self.faults.drops(f.data_id, now) {
                self.gateway.receive_frame(f, now, speed);
            }
        }
        let out = self.gateway.cycle(now, &ts.driver);
        (out, self.gateway.drain_events())
    }
}

fn cycle_input(ts: &TickState) -> CycleInput {
    CycleInput {
        tick: ts.tick,
        time: ts.time,
        now: ts.now,
        ego: ts.ego,
        lead: ts.lead,
    }
}

/// Runs one controller cycle for a tick; errors become a message.
pub(crate) fn run_cecas(
    cecas: &mut CentralCarServer,
    ts: &TickState,
) -> (Option<CecasTelemetry>, Vec<E2EFrame>, Option<String>) {
    if ts.reset_eb {
        cecas.reset_emergency_brake();
    }
    match cecas.cycle(&cycle_input(ts)) {
        Ok(out) => (Some(out.telemetry), out.frames, None),
        Err(e) => (None, Vec::new(), Some(e.to_string())),
    }
}

/// Everything in one process, called synchronously.
pub struct InProcessLink {
    cecas: CentralCarServer,
    gateway: GatewayNode,
}

impl InProcessLink {
    pub fn new(path: Arc<WaypointPath>, scenario: &ScenarioConfig, faults: FaultPlan) -> Self {
        Self {
            cecas: CentralCarServer::new(path, scenario.cecas_config()),
            gateway: GatewayNode::new(scenario, faults),
        }
    }
}

impl ControlLink for InProcessLink {
    fn deliver(&mut self, detection: Detection, _wall_time: f64) -> Result<(), HarnessError> {
        self.cecas.deliver(detection);
        Ok(())
    }

    fn exchange(&mut self, ts: TickState) -> Result<LinkReply, HarnessError> {
        let (telemetry, frames, error) = run_cecas(&mut self.cecas, &ts);
        let (output, events) = self.gateway.on_tick(&ts, &frames);
        Ok(LinkReply {
            telemetry: telemetry.into_iter().collect(),
            output,
            events,
            error,
        })
    }

    fn close(&mut self, _reason: &str) -> Result<(), HarnessError> {
        Ok(())
    }
}

pub(crate) enum Inbound {
    Msg(Role, Message),
    Closed(Role),
    Failed(Role, HarnessError),
}

pub(crate) fn spawn_reader(
    stream: TcpStream,
    role: Role,
    transcript: Transcript,
    tx: Sender<Inbound>,
) -> JoinHandle<()> {
    std::thread::spawn(move || {
        let mut rd = BufReader::new(stream);
        loop {
            match read_message(&mut rd) {
                Ok(Some(m)) => {
                    transcript.record(role, Direction::Received, &m);
                    if tx.send(Inbound::Msg(role, m)).is_err() {
                        return;
                    }
                }
                Ok(None) => {
                    let _ = tx.send(Inbound::Closed(role));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(Inbound::Failed(role, e));
                    return;
                }
            }
        }
    })
}

pub(crate) struct Peer {
    pub(crate) stream: TcpStream,
    pub(crate) delay: Duration,
}

impl Peer {
    pub(crate) fn send(&mut self, role: Role, transcript: &Transcript, msg: &Message) -> Result<(), HarnessError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        transcript.record(role, Direction::Sent, msg);
        super::protocol::write_message(&mut self.stream, msg)
    }
}

/// Handshake on a fresh connection: send our Hello, expect the peer's.
pub(crate) fn handshake(
    stream: &mut TcpStream,
    expect: Role,
    hello: &Message,
    transcript: Option<&Transcript>,
) -> Result<(), HarnessError> {
    if let Some(t) = transcript {
        t.record(expect, Direction::Sent, hello);
    }
    super::protocol::write_message(stream, hello)?;
    let reply = read_message(stream)?;
    if let (Some(t), Some(m)) = (transcript, &reply) {
        t.record(expect, Direction::Received, m);
    }
    match reply {
        Some(Message::Hello { role, version, .. }) if role == expect => {
            if version != PROTOCOL_VERSION {
                return Err(HarnessError::ProtocolViolation(format!(
                    "{role:?} speaks protocol {version}, expected {PROTOCOL_VERSION}"
                )));
            }
            Ok(())
        }
        Some(other) => Err(HarnessError::ProtocolViolation(format!(
            "expected Hello from {expect:?}, got {}",
            other.kind()
        ))),
        None => Err(HarnessError::PeerUnreachable(format!("{expect:?} hung up during handshake"))),
    }
}

pub(crate) fn connect(addr: &str, role: Role) -> Result<TcpStream, HarnessError> {
    let s = TcpStream::connect(addr)
        .map_err(|e| HarnessError::PeerUnreachable(format!("{role:?} at {addr}: {e}")))?;
    s.set_nodelay(true)?;
    Ok(s)
}

/// Control path over TCP. With `gateway_addr` unset the gateway runs in this
/// process (external stage); otherwise it is a peer (ViL stage).
pub struct RemoteLink {
    cecas: Peer,
    gateway: Option<Peer>,
    local_gateway: Option<GatewayNode>,
    lockstep: bool,
    transcript: Transcript,
    rx: Receiver<Inbound>,
    readers: Vec<JoinHandle<()>>,
    /// Replies that arrived ahead of the tick being waited on.
    early: BTreeMap<u64, Vec<(Role, Message)>>,
    last_output: GatewayOutput,
    closed: bool,
}

impl RemoteLink {
    pub fn connect(
        scenario: &ScenarioConfig,
        cecas_addr: &str,
        gateway_addr: Option<&str>,
        lockstep: bool,
        transport_delay: f64,
        faults: FaultPlan,
    ) -> Result<Self, HarnessError> {
        let transcript = Transcript::default();
        let (tx, rx) = mpsc::channel();
        let delay = Duration::from_secs_f64(transport_delay);
        let setup = |gw: Option<String>| PeerSetup {
            scenario: scenario.clone(),
            lockstep,
            transport_delay,
            faults,
            gateway_addr: gw,
        };
        let hello = |gw: Option<String>| Message::Hello {
            role: Role::World,
            version: PROTOCOL_VERSION,
            setup: Some(Box::new(setup(gw))),
        };
        let mut readers = Vec::new();

        let gateway = match gateway_addr {
            Some(addr) => {
                let mut s = connect(addr, Role::Gateway)?;
                handshake(&mut s, Role::Gateway, &hello(None), Some(&transcript))?;
                readers.push(spawn_reader(s.try_clone()?, Role::Gateway, transcript.clone(), tx.clone()));
                Some(Peer { stream: s, delay })
            }
            None => None,
        };
        let mut s = connect(cecas_addr, Role::Cecas)?;
        handshake(&mut s, Role::Cecas, &hello(gateway_addr.map(str::to_string)), Some(&transcript))?;
        readers.push(spawn_reader(s.try_clone()?, Role::Cecas, transcript.clone(), tx));

        Ok(Self {
            cecas: Peer { stream: s, delay },
            local_gateway: gateway.is_none().then(|| GatewayNode::new(scenario, faults)),
            gateway,
            lockstep,
            transcript,
            rx,
            readers,
            early: BTreeMap::new(),
            last_output: GatewayOutput {
                command: ControlCommand::neutral(),
                mode: GatewayMode::ManualDrive,
                active: None,
                fresh: false,
            },
            closed: false,
        })
    }

    fn inbound(&mut self, block: bool) -> Result<Option<(Role, Message)>, HarnessError> {
        let item = if block {
            match self.rx.recv_timeout(REPLY_TIMEOUT) {
                Ok(i) => i,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(HarnessError::PeerUnreachable("no reply within timeout".into()))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(HarnessError::PeerUnreachable("all peers gone".into()))
                }
            }
        } else {
            match self.rx.try_recv() {
                Ok(i) => i,
                Err(_) => return Ok(None),
            }
        };
        match item {
            Inbound::Msg(role, m) => Ok(Some((role, m))),
            Inbound::Closed(role) => Err(HarnessError::PeerUnreachable(format!("{role:?} closed the connection"))),
            Inbound::Failed(role, e) => {
                log::warn!("receive from {role:?} failed: {e}");
                Err(e)
            }
        }
    }

    /// Lockstep: collects the replies for `tick` from every peer.
    fn wait_replies(&mut self, tick: u64) -> Result<Vec<(Role, Message)>, HarnessError> {
        let mut want = vec![Role::Cecas];
        if self.gateway.is_some() {
            want.push(Role::Gateway);
        }
        let mut got: Vec<(Role, Message)> = Vec::new();
        let done = |got: &[(Role, Message)], want: &[Role]| {
            want.iter().all(|r| {
                got.iter()
                    .any(|(g, m)| g == r && matches!(m, Message::ControlReply(_)))
            })
        };
        while !done(&got, &want) {
            let (role, msg) = self.inbound(true)?.expect("blocking receive yields a message");
            match msg.tick() {
                Some(t) if t == tick => got.push((role, msg)),
                Some(t) if t > tick => self.early.entry(t).or_default().push((role, msg)),
                Some(t) => {
                    return Err(HarnessError::ProtocolViolation(format!(
                        "{role:?} sent {} for tick {t} while waiting on tick {tick}",
                        msg.kind()
                    )))
                }
                None => match msg {
                    Message::Bye { reason } => {
                        return Err(HarnessError::PeerUnreachable(format!("{role:?} left: {reason}")))
                    }
                    other => {
                        return Err(HarnessError::ProtocolViolation(format!(
                            "unexpected {} from {role:?}",
                            other.kind()
                        )))
                    }
                },
            }
        }
        Ok(got)
    }

    fn drain(&mut self, tick: u64) -> Result<Vec<(Role, Message)>, HarnessError> {
        let mut got: Vec<(Role, Message)> = Vec::new();
        let ready: Vec<u64> = self.early.range(..=tick).map(|(t, _)| *t).collect();
        for t in ready {
            got.extend(self.early.remove(&t).unwrap_or_default());
        }
        while let Some((role, msg)) = self.inbound(false)? {
            match msg.tick() {
                Some(t) if t > tick => {
                    return Err(HarnessError::ProtocolViolation(format!(
                        "{role:?} replied to tick {t} before it was sent"
                    )))
                }
                Some(_) => got.push((role, msg)),
                None => {
                    if let Message::Bye { reason } = msg {
                        return Err(HarnessError::PeerUnreachable(format!("{role:?} left: {reason}")));
                    }
                }
            }
        }
        Ok(got)
    }
}

impl ControlLink for RemoteLink {
    fn deliver(&mut self, detection: Detection, wall_time: f64) -> Result<(), HarnessError> {
        let msg = Message::Detection { detection, wall_time };
        self.cecas.send(Role::Cecas, &self.transcript, &msg)
    }

    fn exchange(&mut self, ts: TickState) -> Result<LinkReply, HarnessError> {
        let tick = ts.tick;
        let msg = Message::TickState(Box::new(ts.clone()));
        if let Some(gw) = &mut self.gateway {
            gw.send(Role::Gateway, &self.transcript, &msg)?;
        }
        self.cecas.send(Role::Cecas, &self.transcript, &msg)?;

        let inbound = if self.lockstep {
            self.wait_replies(tick)?
        } else {
            self.drain(tick)?
        };

        let mut telemetry = Vec::new();
        let mut frames = Vec::new();
        let mut events = Vec::new();
        let mut error = None;
        let mut remote_output = None;
        for (role, msg) in inbound {
            match (role, msg) {
                (Role::Cecas, Message::ControlReply(r)) => {
                    let ControlReply { telemetry: t, frames: f, error: e, .. } = *r;
                    telemetry.extend(t);
                    frames.extend(frames_from_hex(&f)?);
                    if e.is_some() {
                        error = e;
                    }
                }
                (Role::Gateway, Message::ControlReply(r)) => {
                    if let Some(o) = r.output {
                        remote_output = Some(o);
                    }
                }
                (Role::Gateway, Message::ModeEvent { event, .. }) => events.push(event),
                (role, m) => {
                    return Err(HarnessError::ProtocolViolation(format!(
                        "unexpected {} from {role:?}",
                        m.kind()
                    )))
                }
            }
        }
        let output = match &mut self.local_gateway {
            Some(node) => {
                let (o, ev) = node.on_tick(&ts, &frames);
                events.extend(ev);
                o
            }
            None => match remote_output {
                Some(o) => o,
                None if self.lockstep => {
                    return Err(HarnessError::ProtocolViolation("gateway reply without output".into()))
                }
                // free running: keep actuating the last command that arrived
                None => GatewayOutput {
                    fresh: false,
                    ..self.last_output
                },
            },
        };
        self.last_output = output;
        Ok(LinkReply {
            telemetry,
            output,
            events,
            error,
        })
    }

    fn close(&mut self, reason: &str) -> Result<(), HarnessError> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let bye = Message::Bye {
            reason: reason.to_string(),
        };
        let _ = self.cecas.send(Role::Cecas, &self.transcript, &bye);
        if let Some(gw) = &mut self.gateway {
            let _ = gw.send(Role::Gateway, &self.transcript, &bye);
        }
        let _ = self.cecas.stream.shutdown(std::net::Shutdown::Write);
        if let Some(gw) = &self.gateway {
            let _ = gw.stream.shutdown(std::net::Shutdown::Write);
        }
        for h in self.readers.drain(..) {
            let _ = h.join();
        }
        Ok(())
    }

    fn transcript(&self) -> Option<Transcript> {
        Some(self.transcript.clone())
    }
}

impl Drop for RemoteLink {
    fn drop(&mut self) {
        let _ = self.close("dropped");
    }
}
