//! Peer processes for the external and ViL stages: the central car server
//! and the vehicle motion gateway, each serving one run per session.

use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};

use crate::cecas::CentralCarServer;
use crate::gateway::E2EFrame;

use super::link::{connect, handshake, run_cecas, spawn_reader, GatewayNode, Inbound, Peer};
use super::protocol::{
    frames_from_hex, frames_to_hex, read_message, write_message, ControlReply, Message, PeerSetup,
    Role, Transcript, PROTOCOL_VERSION,
};
use super::HarnessError;

fn hello(role: Role) -> Message {
    Message::Hello {
        role,
        version: PROTOCOL_VERSION,
        setup: None,
    }
}

fn violation<T>(msg: String) -> Result<T, HarnessError> {
    Err(HarnessError::ProtocolViolation(msg))
}

/// Serves one run for a connected world.
pub fn serve_cecas_session(mut stream: TcpStream) -> Result<(), HarnessError> {
    stream.set_nodelay(true)?;
    let setup: PeerSetup = match read_message(&mut stream)? {
        Some(Message::Hello {
            role: Role::World,
            version: PROTOCOL_VERSION,
            setup: Some(s),
        }) => *s,
        Some(m) => return violation(format!("expected world Hello, got {}", m.kind())),
        None => return Ok(()),
    };
    write_message(&mut stream, &hello(Role::Cecas))?;
    let delay = Duration::from_secs_f64(setup.transport_delay);
    let path = Arc::new(setup.scenario.load_path()?);
    let mut cecas = CentralCarServer::new(path, setup.scenario.cecas_config());
    let transcript = Transcript::default();
    let mut gateway = match &setup.gateway_addr {
        Some(addr) => {
            let mut s = connect(addr, Role::Gateway)?;
            handshake(&mut s, Role::Gateway, &hello(Role::Cecas), None)?;
            Some(Peer { stream: s, delay })
        }
        None => None,
    };
    let mut world = Peer {
        stream: stream.try_clone()?,
        delay,
    };
    let mut next_tick = 0u64;
    let result = loop {
        let msg = match read_message(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        };
        match msg {
            Message::Detection { detection, .. } => cecas.deliver(detection),
            Message::TickState(ts) => {
                let in_order = if setup.lockstep {
                    ts.tick == next_tick
                } else {
                    ts.tick >= next_tick
                };
                if !in_order {
                    break violation(format!("TickState {} while expecting {next_tick}", ts.tick));
                }
                next_tick = ts.tick + 1;
                let (telemetry, frames, error) = run_cecas(&mut cecas, &ts);
                let hex = frames_to_hex(&frames);
                let frames = match &mut gateway {
                    Some(gw) => {
                        let m = Message::GatewayFrame {
                            tick: ts.tick,
                            frames: hex,
                        };
                        gw.send(Role::Gateway, &transcript, &m)?;
                        Vec::new()
                    }
                    None => hex,
                };
                let reply = ControlReply {
                    tick: ts.tick,
                    from: Role::Cecas,
                    telemetry,
                    frames,
                    output: None,
                    error,
                };
                world.send(Role::World, &transcript, &Message::ControlReply(Box::new(reply)))?;
            }
            Message::Bye { reason } => {
                debug!("central car server: world said bye ({reason})");
                break Ok(());
            }
            m => break violation(format!("unexpected {} from world", m.kind())),
        }
    };
    if let Some(gw) = &mut gateway {
        let reason = match &result {
            Ok(()) => "run finished".to_string(),
            Err(e) => e.to_string(),
        };
        let _ = gw.send(Role::Gateway, &transcript, &Message::Bye { reason });
    }
    if let Err(e) = &result {
        let _ = world.send(Role::World, &transcript, &Message::Bye { reason: e.to_string() });
    }
    result
}

/// Accepts the world and the central car server, then serves one run.
pub fn serve_gateway_session(listener: &TcpListener) -> Result<(), HarnessError> {
    let mut world: Option<(TcpStream, PeerSetup)> = None;
    let mut cecas: Option<TcpStream> = None;
    while world.is_none() || cecas.is_none() {
        let (mut s, _) = listener.accept()?;
        s.set_nodelay(true)?;
        match read_message(&mut s)? {
            Some(Message::Hello {
                role: Role::World,
                version: PROTOCOL_VERSION,
                setup: Some(setup),
            }) if world.is_none() => {
                write_message(&mut s, &hello(Role::Gateway))?;
                world = Some((s, *setup));
            }
            Some(Message::Hello {
                role: Role::Cecas,
                version: PROTOCOL_VERSION,
                ..
            }) if cecas.is_none() => {
                write_message(&mut s, &hello(Role::Gateway))?;
                cecas = Some(s);
            }
            Some(m) => {
                warn!("gateway: rejecting connection that opened with {}", m.kind());
            }
            None => {}
        }
    }
    let (world_stream, setup) = world.expect("loop exits with both peers");
    let cecas_stream = cecas.expect("loop exits with both peers");

    let transcript = Transcript::default();
    let (tx, rx) = mpsc::channel();
    let r1 = spawn_reader(world_stream.try_clone()?, Role::World, transcript.clone(), tx.clone());
    let r2 = spawn_reader(cecas_stream.try_clone()?, Role::Cecas, transcript.clone(), tx);
    let mut out = Peer {
        stream: world_stream,
        delay: Duration::from_secs_f64(setup.transport_delay),
    };
    let mut node = GatewayNode::new(&setup.scenario, setup.faults);
    let mut frames: BTreeMap<u64, Vec<E2EFrame>> = BTreeMap::new();
    let mut pending = None;
    let mut last_tick: Option<u64> = None;

    let result = loop {
        let Ok(item) = rx.recv() else { break Ok(()) };
        match item {
            Inbound::Msg(Role::Cecas, Message::GatewayFrame { tick, frames: f }) => {
                frames.entry(tick).or_default().extend(frames_from_hex(&f)?);
            }
            Inbound::Msg(Role::World, Message::TickState(ts)) => {
                if pending.is_some() && setup.lockstep {
                    break violation(format!("TickState {} before the previous reply", ts.tick));
                }
                if last_tick.is_some_and(|t| ts.tick <= t) {
                    break violation(format!("TickState {} repeats or goes back", ts.tick));
                }
                pending = Some(ts);
            }
            Inbound::Msg(_, Message::Bye { .. }) | Inbound::Closed(Role::World) => break Ok(()),
            Inbound::Closed(_) => {
                if setup.lockstep && pending.is_some() {
                    break Err(HarnessError::PeerUnreachable("central car server went away".into()));
                }
            }
            Inbound::Failed(_, e) => break Err(e),
            Inbound::Msg(role, m) => break violation(format!("unexpected {} from {role:?}", m.kind())),
        }
        let ready = pending
            .as_ref()
            .is_some_and(|ts| !setup.lockstep || frames.contains_key(&ts.tick));
        if ready {
            let ts = pending.take().expect("checked");
            let later = frames.split_off(&(ts.tick + 1));
            let due: Vec<E2EFrame> = std::mem::replace(&mut frames, later)
                .into_values()
                .flatten()
                .collect();
            let (output, events) = node.on_tick(&ts, &due);
            for event in events {
                out.send(Role::World, &transcript, &Message::ModeEvent { tick: ts.tick, event })?;
            }
            let reply = ControlReply {
                tick: ts.tick,
                from: Role::Gateway,
                telemetry: None,
                frames: Vec::new(),
                output: Some(output),
                error: None,
            };
            out.send(Role::World, &transcript, &Message::ControlReply(Box::new(reply)))?;
            last_tick = Some(ts.tick);
        }
    };
    let _ = out.stream.shutdown(std::net::Shutdown::Both);
    let _ = cecas_stream.shutdown(std::net::Shutdown::Both);
    let _ = r1.join();
    let _ = r2.join();
    result
}

/// Serves central-car-server sessions forever, one thread per connection.
pub fn serve_cecas(listener: TcpListener) -> Result<(), HarnessError> {
    for stream in listener.incoming() {
        let stream = stream?;
        std::thread::spawn(move || {
            if let Err(e) = serve_cecas_session(stream) {
                warn!("central car server session failed: {e}");
            }
        });
    }
    Ok(())
}

/// Serves gateway sessions one after another.
pub fn serve_gateway(listener: TcpListener) -> Result<(), HarnessError> {
    loop {
        if let Err(e) = serve_gateway_session(&listener) {
            warn!("gateway session failed: {e}");
        }
    }
}

/// Loopback peers started as threads of this process for a single run.
pub struct LocalPeers {
    pub cecas_addr: String,
    pub gateway_addr: Option<String>,
    handles: Vec<JoinHandle<Result<(), HarnessError>>>,
}

impl LocalPeers {
    pub fn spawn(with_gateway: bool) -> Result<Self, HarnessError> {
        let mut handles = Vec::new();
        let gateway_addr = if with_gateway {
            let l = TcpListener::bind("127.0.0.1:0")?;
            let addr = l.local_addr()?.to_string();
            handles.push(std::thread::spawn(move || serve_gateway_session(&l)));
            Some(addr)
        } else {
            None
        };
        let l = TcpListener::bind("127.0.0.1:0")?;
        let cecas_addr = l.local_addr()?.to_string();
        handles.push(std::thread::spawn(move || {
            let (s, _) = l.accept()?;
            serve_cecas_session(s)
        }));
        Ok(Self {
            cecas_addr,
            gateway_addr,
            handles,
        })
    }

    /// Waits for the peers to finish and returns the first peer error.
    pub fn join(self) -> Result<(), HarnessError> {
        let mut first = Ok(());
        for h in self.handles {
            let r = h
                .join()
                .unwrap_or_else(|_| Err(HarnessError::PeerUnreachable("peer thread panicked".into())));
            if first.is_ok() {
                first = r;
            }
        }
        first
    }
}
