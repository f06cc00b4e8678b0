//! Test stages, scenarios, the wire protocol, run logs, latency analysis,
//! reports and replay.

pub mod latency;
pub mod link;
pub mod peers;
pub mod protocol;
pub mod replay;
pub mod report;
pub mod runlog;
pub mod scenario;
pub mod session;
pub mod stage;

use std::sync::Arc;

use thiserror::Error;

use crate::error::{MapError, ParamError, WorldError};

pub use latency::{latency_stats, measure_latencies, LatencyReport, LatencyStats};
pub use link::{ControlLink, GatewayNode, InProcessLink, LinkReply, RemoteLink};
pub use peers::LocalPeers;
pub use protocol::{check_lockstep, Message, Role, TranscriptEntry};
pub use replay::{first_divergence, replay, replay_with, Divergence};
pub use report::{report, Report};
pub use runlog::{LatencyRecord, LogEvent, RunLog, RunMeta, Termination, TickRow};
pub use scenario::{ActorSpec, EventAction, ScenarioConfig, ScenarioKind, TimedEvent};
pub use session::{Clock, Session};
pub use stage::{Endpoints, FaultPlan, StageConfig, StageKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("peer unreachable: {0}")]
    PeerUnreachable(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("scenario diverged: {reason}")]
    ScenarioDiverged { reason: String, log: Box<RunLog> },
    #[error("log contains no emergency-brake triggers")]
    NoTriggers,
    #[error("replay diverged at tick {} in column {}: recorded {}, replayed {}", .0.tick, .0.column, .0.recorded, .0.replayed)]
    DivergenceFound(Box<Divergence>),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ParamError> for HarnessError {
    fn from(e: ParamError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<MapError> for HarnessError {
    fn from(e: MapError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

/// A finished run with the world's protocol transcript, if there was one.
pub struct RunOutcome {
    pub log: RunLog,
    pub transcript: Option<Vec<TranscriptEntry>>,
}

fn meta(scenario: &ScenarioConfig, stage: &StageConfig) -> RunMeta {
    RunMeta {
        scenario: scenario.clone(),
        stage: stage.stage,
        lockstep: stage.lockstep,
        transport_delay: if stage.stage == StageKind::Internal {
            0.0
        } else {
            stage.transport_delay
        },
        faults: stage.faults,
    }
}

/// Runs a scenario to completion on the given stage. A diverged run is
/// returned as `Ok` with a `Diverged` termination; see [`run_scenario`] for
/// the error-returning form.
pub fn run_stage(scenario: &ScenarioConfig, stage: &StageConfig) -> Result<RunOutcome, HarnessError> {
    scenario.validate()?;
    stage.validate()?;
    let meta = meta(scenario, stage);
    let (link, peers): (Box<dyn ControlLink>, Option<LocalPeers>) = match stage.stage {
        StageKind::Internal => {
            let path = Arc::new(scenario.load_path()?);
            (Box::new(InProcessLink::new(path, scenario, stage.faults)), None)
        }
        StageKind::External | StageKind::Vil => {
            let with_gateway = stage.stage == StageKind::Vil;
            let need_local = stage.endpoints.cecas.is_none()
                || (with_gateway && stage.endpoints.gateway.is_none());
            let peers = if need_local {
                Some(LocalPeers::spawn(with_gateway)?)
            } else {
                None
            };
            let cecas_addr = stage
                .endpoints
                .cecas
                .clone()
                .or_else(|| peers.as_ref().map(|p| p.cecas_addr.clone()))
                .expect("local peers spawned when missing");
            let gateway_addr = with_gateway.then(|| {
                stage
                    .endpoints
                    .gateway
                    .clone()
                    .or_else(|| peers.as_ref().and_then(|p| p.gateway_addr.clone()))
                    .expect("local peers spawned when missing")
            });
            let link = RemoteLink::connect(
                scenario,
                &cecas_addr,
                gateway_addr.as_deref(),
                stage.lockstep,
                stage.transport_delay,
                stage.faults,
            )?;
            (Box::new(link), peers)
        }
    };
    let clock = if stage.stage != StageKind::Internal && !stage.lockstep {
        Clock::Wall
    } else {
        Clock::Virtual
    };
    let mut session = Session::new(meta, link, clock)?;
    let looped = (|| {
        while session.advance()? {}
        Ok::<(), HarnessError>(())
    })();
    if let Err(e) = &looped {
        session.stop(&e.to_string());
    }
    let (log, transcript) = session.finish()?;
    if let Some(p) = peers {
        let peer_result = p.join();
        looped?;
        if stage.lockstep {
            peer_result?;
        }
    } else {
        looped?;
    }
    let transcript = transcript.map(|t| t.entries());
    if stage.lockstep {
        if let Some(t) = &transcript {
            check_lockstep(t).map_err(HarnessError::ProtocolViolation)?;
        }
    }
    Ok(RunOutcome { log, transcript })
}

/// Runs a scenario; a divergence is reported as
/// [`HarnessError::ScenarioDiverged`] carrying the partial log.
pub fn run_scenario(scenario: &ScenarioConfig, stage: &StageConfig) -> Result<RunLog, HarnessError> {
    let out = run_stage(scenario, stage)?;
    match &out.log.termination {
        Termination::Diverged { reason, .. } => Err(HarnessError::ScenarioDiverged {
            reason: reason.clone(),
            log: Box::new(out.log),
        }),
        _ => Ok(out.log),
    }
}
