//! Live cockpit channel: a WebSocket endpoint at `/cockpit` that streams the
//! running world as JSON frames and takes driver input back.
//!
//! Server to client: `{"t":"frame","v":1,...}` at 20 Hz, decimated from the
//! tick rate. Client to server: `{"t":"input","v":1,"steer":..,"throttle":..,
//! "brake":..}` plus optional `turn_signal`, `mode_toggle` and `estop`. Axis
//! values are clamped again on arrival; the client is not trusted.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::http::StatusCode;
use tungstenite::{Message as WsMessage, WebSocket};

use crate::cecas::EbStatus;
use crate::gateway::{ControlCommand, GatewayMode, ModeRequest, ModeSource, TurnSignal};
use crate::harness::{
    Clock, FaultPlan, HarnessError, InProcessLink, RunLog, RunMeta, ScenarioConfig, Session, StageKind,
};
use crate::world::ActorKind;

pub const COCKPIT_PATH: &str = "/cockpit";
pub const COCKPIT_VERSION: u32 = 1;
/// Frames per second sent to the client.
pub const FRAME_RATE: f64 = 20.0;
/// Centerline points sent ahead of the ego in each frame.
const WAYPOINTS_AHEAD: usize = 60;
const WAYPOINT_SPACING: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorView {
    pub id: u32,
    pub kind: ActorKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CockpitFrame {
    pub v: u32,
    pub tick: u64,
    pub time: f64,
    pub ego: EgoView,
    pub throttle: f64,
    pub brake: f64,
    pub actors: Vec<ActorView>,
    pub waypoints: Vec<[f64; 2]>,
    pub mode: GatewayMode,
    pub eb_status: EbStatus,
    pub gap: Option<f64>,
    pub lateral_error: f64,
    pub turn_signal: TurnSignal,
    /// Set on the last frame of a session.
    pub finished: bool,
}

fn default_version() -> u32 {
    COCKPIT_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverInput {
    #[serde(default = "default_version")]
    pub v: u32,
    /// Steering axis in [-1, 1], scaled to the vehicle's steering range.
    #[serde(default)]
    pub steer: f64,
    #[serde(default)]
    pub throttle: f64,
    #[serde(default)]
    pub brake: f64,
    #[serde(default)]
    pub turn_signal: Option<TurnSignal>,
    /// Engage the self-driving system from manual drive, or take over from it.
    #[serde(default)]
    pub mode_toggle: bool,
    #[serde(default)]
    pub estop: bool,
}

fn clamp_axis(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(lo, hi)
    }
}

impl DriverInput {
    pub fn clamped(self) -> Self {
        Self {
            steer: clamp_axis(self.steer, -1.0, 1.0),
            throttle: clamp_axis(self.throttle, 0.0, 1.0),
            brake: clamp_axis(self.brake, 0.0, 1.0),
            ..self
        }
    }

    pub fn to_command(self, max_steer: f64, previous: TurnSignal) -> ControlCommand {
        let c = self.clamped();
        ControlCommand {
            throttle: c.throttle,
            brake: c.brake,
            steer: c.steer * max_steer,
            turn_signal: c.turn_signal.unwrap_or(previous),
            ..ControlCommand::neutral()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum CockpitMessage {
    Frame(Box<CockpitFrame>),
    Input(DriverInput),
}

/// Snapshot of the session's latest tick.
pub fn frame_of(session: &Session) -> CockpitFrame {
    let state = session.state();
    let world = session.world();
    let row = session.rows().last();
    let ego = &state.ego;
    let s0 = world.ego_s(state);
    let waypoints = (0..WAYPOINTS_AHEAD)
        .map(|i| {
            let p = world.path.pose_at(s0 + i as f64 * WAYPOINT_SPACING);
            [p.x, p.y]
        })
        .collect();
    CockpitFrame {
        v: COCKPIT_VERSION,
        tick: state.tick_index,
        time: state.time(),
        ego: EgoView {
            x: ego.pose.x,
            y: ego.pose.y,
            heading: ego.pose.heading,
            speed: ego.speed,
            steer: ego.steer,
        },
        throttle: row.map_or(0.0, |r| r.throttle),
        brake: row.map_or(0.0, |r| r.brake),
        actors: state
            .actors
            .iter()
            .map(|a| ActorView {
                id: a.id,
                kind: a.kind,
                x: a.pose.x,
                y: a.pose.y,
                heading: a.pose.heading,
            })
            .collect(),
        waypoints,
        mode: session.mode(),
        eb_status: row.map_or(EbStatus::Normal, |r| r.eb_status),
        gap: world.lead(state).map(|(_, g)| g),
        lateral_error: world.lateral_error(state),
        turn_signal: row.map_or(TurnSignal::Off, |r| r.turn_signal),
        finished: session.is_finished(),
    }
}

#[derive(Debug, Clone)]
pub struct CockpitOptions {
    pub scenario: ScenarioConfig,
    /// Pace ticks to the wall clock.
    pub realtime: bool,
    /// Each session's log goes to `out/session-N`.
    pub out: Option<PathBuf>,
    /// Stop after this many sessions; `None` serves forever.
    pub max_sessions: Option<usize>,
}

impl CockpitOptions {
    /// Open-ended manual drive on the straight road with no scripted inputs.
    pub fn manual(duration: f64) -> Self {
        Self {
            scenario: ScenarioConfig {
                duration,
                event_script: Vec::new(),
                ..ScenarioConfig::manual_drive()
            },
            realtime: true,
            out: None,
            max_sessions: None,
        }
    }
}

/// Serves cockpit sessions, one client at a time.
pub fn serve_cockpit(listener: TcpListener, opts: &CockpitOptions) -> Result<(), HarnessError> {
    opts.scenario.validate()?;
    let mut served = 0;
    for stream in listener.incoming() {
        let stream = stream?;
        match run_client(stream, opts) {
            Ok(Some(log)) => {
                served += 1;
                if let Some(dir) = &opts.out {
                    log.write_dir(&dir.join(format!("session-{served}")))?;
                }
            }
            Ok(None) => {}
            Err(e) => log::warn!("cockpit session failed: {e}"),
        }
        if opts.max_sessions.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

#[allow(clippy::result_large_err)] // the callback signature is fixed by tungstenite
fn handshake(stream: TcpStream) -> Option<WebSocket<TcpStream>> {
    let check = |req: &Request, resp: Response| {
        if req.uri().path() == COCKPIT_PATH {
            Ok(resp)
        } else {
            let mut e = ErrorResponse::new(Some(format!("no endpoint at {}", req.uri().path())));
            *e.status_mut() = StatusCode::NOT_FOUND;
            Err(e)
        }
    };
    match tungstenite::accept_hdr(stream, check) {
        Ok(ws) => Some(ws),
        Err(e) => {
            log::info!("cockpit handshake rejected: {e}");
            None
        }
    }
}

enum Inbox {
    Open,
    Gone,
}

fn drain_inputs(
    ws: &mut WebSocket<TcpStream>,
    session: &mut Session,
    driver: &mut ControlCommand,
) -> Inbox {
    loop {
        match ws.read() {
            Ok(WsMessage::Text(text)) => match serde_json::from_str::<CockpitMessage>(&text) {
                Ok(CockpitMessage::Input(input)) if input.v == COCKPIT_VERSION => {
                    apply_input(session, driver, input);
                }
                Ok(CockpitMessage::Input(input)) => {
                    log::warn!("ignoring input with protocol version {}", input.v);
                }
                Ok(CockpitMessage::Frame(_)) => log::warn!("client sent a frame; ignored"),
                Err(e) => log::warn!("undecodable cockpit message: {e}"),
            },
            Ok(WsMessage::Close(_)) => return Inbox::Gone,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => return Inbox::Open,
            Err(e) => {
                log::info!("cockpit client gone: {e}");
                return Inbox::Gone;
            }
        }
    }
}

/// Applies one input message to the session.
pub fn apply_input(session: &mut Session, driver: &mut ControlCommand, input: DriverInput) {
    let max_steer = session.world().vehicle.max_steer;
    *driver = input.to_command(max_steer, driver.turn_signal);
    session.set_driver_input(*driver);
    if input.estop {
        session.bench_stop();
    }
    if input.mode_toggle {
        match session.mode() {
            GatewayMode::ManualDrive => session.request_mode(ModeRequest::ExternalControl, ModeSource::Sds),
            GatewayMode::ExternalControl | GatewayMode::FallbackLimited => {
                session.request_mode(ModeRequest::ManualDrive, ModeSource::Driver)
            }
            GatewayMode::EmergencyStop => session.request_mode(ModeRequest::ManualDrive, ModeSource::Bench),
        }
    }
}

fn send_frame(ws: &mut WebSocket<TcpStream>, session: &Session) -> bool {
    let msg = CockpitMessage::Frame(Box::new(frame_of(session)));
    let text = serde_json::to_string(&msg).expect("frames serialize");
    match ws.send(WsMessage::text(text)) {
        Ok(()) => true,
        Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => true,
        Err(e) => {
            log::info!("cockpit send failed: {e}");
            false
        }
    }
}

/// Runs one session for one client. `None` when the handshake failed.
fn run_client(stream: TcpStream, opts: &CockpitOptions) -> Result<Option<RunLog>, HarnessError> {
    let Some(mut ws) = handshake(stream) else {
        return Ok(None);
    };
    ws.get_ref().set_nonblocking(true)?;
    ws.get_ref().set_nodelay(true)?;

    let sc = &opts.scenario;
    let path = Arc::new(sc.load_path()?);
    let link = InProcessLink::new(path, sc, FaultPlan::default());
    let meta = RunMeta {
        scenario: sc.clone(),
        stage: StageKind::Internal,
        lockstep: true,
        transport_delay: 0.0,
        faults: FaultPlan::default(),
    };
    let mut session = Session::new(meta, Box::new(link), Clock::Virtual)?;
    let mut driver = ControlCommand::neutral();
    let started = Instant::now();
    let mut frames_sent: u64 = 0;
    let mut connected = send_frame(&mut ws, &session);

    while connected {
        if let Inbox::Gone = drain_inputs(&mut ws, &mut session, &mut driver) {
            connected = false;
            break;
        }
        let running = session.advance()?;
        let t = session.state().time();
        // frame k is due once virtual time reaches k / FRAME_RATE
        if (t * FRAME_RATE + 1e-9).floor() as u64 > frames_sent || !running {
            frames_sent = (t * FRAME_RATE + 1e-9).floor() as u64;
            connected = send_frame(&mut ws, &session);
        }
        if !running {
            break;
        }
        if opts.realtime {
            let ahead = t - started.elapsed().as_secs_f64();
            if ahead > 0.0 {
                std::thread::sleep(Duration::from_secs_f64(ahead));
            }
        }
    }
    if !connected {
        session.stop("cockpit client disconnected");
    }
    let _ = ws.flush();
    let _ = ws.close(None);
    let _ = ws.flush();
    let (log, _) = session.finish()?;
    Ok(Some(log))
}
