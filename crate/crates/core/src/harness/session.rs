//! The world-side run loop. One `Session` owns the world state, the camera
//! stream and the control link, and advances one tick per `advance` call.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cecas::{EbStatus, LeadObservation, TriggerInfo};
use crate::gateway::{ControlCommand, GatewayMode, GatewayOutput, ModeRequest, ModeSource, TurnSignal};
use crate::sensors::{capture_frame, next_capture_time, Cadence, CameraConfig, InFlight, TIME_EPS};
use crate::world::{ActorKind, BodyExtent, TickBarrier, World, WorldState};

use super::link::ControlLink;
use super::protocol::{TickState, Transcript};
use super::runlog::{
    Counters, EventKind, LatencyRecord, LogEvent, RunLog, RunMeta, Termination, TickRow,
};
use super::scenario::{ActorSpec, EventAction, TimedEvent};
use super::HarnessError;

/// Source of the `now` handed to perception and the gateway.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    /// Tick time. Deterministic.
    Virtual,
    /// Seconds since the session started; ticks are paced to real time.
    Wall,
}

pub struct Session {
    meta: RunMeta,
    world: World,
    state: WorldState,
    cadence: Cadence,
    rng: ChaCha8Rng,
    camera: CameraConfig,
    next_frame: u64,
    inflight: InFlight,
    link: Box<dyn ControlLink>,
    clock: Clock,
    started: Instant,
    total_ticks: u64,
    script: Vec<TimedEvent>,
    next_event: usize,
    rows: Vec<TickRow>,
    events: Vec<LogEvent>,
    latencies: Vec<LatencyRecord>,
    counters: Counters,
    driver: ControlCommand,
    mode_requests: Vec<(ModeRequest, ModeSource)>,
    bench_stop: bool,
    reset_eb: bool,
    pending_trigger: Option<TriggerInfo>,
    onset: Option<f64>,
    turn_signal: TurnSignal,
    eb_status: EbStatus,
    perceived: Option<f64>,
    last_output: Option<GatewayOutput>,
    termination: Option<Termination>,
}

impl Session {
    pub fn new(meta: RunMeta, link: Box<dyn ControlLink>, clock: Clock) -> Result<Self, HarnessError> {
        let sc = &meta.scenario;
        sc.validate()?;
        let path = Arc::new(sc.load_path()?);
        let world = World::new(path, sc.vehicle);
        let state = world.initial_state(sc.start_s, sc.start_speed, sc.tick_period);
        let mut script = sc.event_script.clone();
        script.sort_by(|a, b| a.at.total_cmp(&b.at));
        let mut s = Self {
            cadence: sc.cadence()?,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            camera: sc.camera,
            total_ticks: sc.total_ticks(),
            world,
            state,
            next_frame: 0,
            inflight: InFlight::default(),
            link,
            clock,
            started: Instant::now(),
            script,
            next_event: 0,
            rows: Vec::new(),
            events: Vec::new(),
            latencies: Vec::new(),
            counters: Counters::default(),
            driver: ControlCommand::neutral(),
            mode_requests: Vec::new(),
            bench_stop: false,
            reset_eb: false,
            pending_trigger: None,
            onset: None,
            turn_signal: TurnSignal::Off,
            eb_status: EbStatus::Normal,
            perceived: None,
            last_output: None,
            termination: None,
            meta,
        };
        for a in s.meta.scenario.actors.clone() {
            s.spawn(&a)?;
        }
        Ok(s)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn rows(&self) -> &[TickRow] {
        &self.rows
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn last_output(&self) -> Option<&GatewayOutput> {
        self.last_output.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.termination.is_some()
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    /// Manual input forwarded by the gateway while in ManualDrive.
    pub fn set_driver_input(&mut self, cmd: ControlCommand) {
        self.driver = cmd;
    }

    pub fn request_mode(&mut self, request: ModeRequest, source: ModeSource) {
        self.mode_requests.push((request, source));
    }

    /// Bench emergency stop, applied on the next tick.
    pub fn bench_stop(&mut self) {
        self.bench_stop = true;
    }

    /// Ends the run early, e.g. when an interactive driver disconnects.
    pub fn stop(&mut self, reason: &str) {
        if self.termination.is_none() {
            let tick = self.state.tick_index;
            self.log(EventKind::Terminated {
                reason: reason.to_string(),
            });
            self.termination = Some(Termination::Stopped {
                tick,
                reason: reason.to_string(),
            });
        }
    }

    fn log(&mut self, kind: EventKind) {
        self.events.push(LogEvent {
            tick: self.state.tick_index,
            time: self.state.time(),
            kind,
        });
    }

    fn wall(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn spawn(&mut self, a: &ActorSpec) -> Result<(), HarnessError> {
        let ego_s = self.world.ego_s(&self.state);
        let rear = BodyExtent::for_kind(a.kind, &self.world.vehicle).rear;
        let s = ego_s + self.world.vehicle.front_extent() + a.gap + rear;
        self.world
            .insert_actor(&mut self.state, a.kind, s, a.lateral_offset, a.speed, a.accel)?;
        Ok(())
    }

    fn apply(&mut self, action: EventAction) -> Result<(), HarnessError> {
        match action {
            EventAction::SpawnPedestrian { gap, lateral_offset } => {
                self.spawn(&ActorSpec {
                    kind: ActorKind::Pedestrian,
                    gap,
                    lateral_offset,
                    speed: 0.0,
                    accel: 0.0,
                })?;
                self.onset = Some(self.state.time());
            }
            EventAction::SpawnActor { actor } => self.spawn(&actor)?,
            EventAction::RemovePedestrians => {
                self.state.actors.retain(|a| a.kind != ActorKind::Pedestrian);
                self.onset = None;
            }
            EventAction::ResetEmergencyBrake => {
                self.reset_eb = true;
                self.pending_trigger = None;
            }
            EventAction::SetExtraLoad { delay } => self.camera.extra_load_delay = delay,
            EventAction::SetLeadMotion { speed, accel } => {
                let ids: Vec<_> = self
                    .state
                    .actors
                    .iter()
                    .filter(|a| a.kind == ActorKind::LeadVehicle)
                    .map(|a| a.id)
                    .collect();
                for id in ids {
                    self.world.retime_actor(&mut self.state, id, speed, accel)?;
                }
            }
            EventAction::DriverInput {
                throttle,
                brake,
                steer,
                turn_signal,
            } => {
                self.driver = ControlCommand {
                    throttle,
                    brake,
                    steer,
                    turn_signal,
                    ..ControlCommand::neutral()
                };
            }
            EventAction::RequestMode { request, source } => self.mode_requests.push((request, source)),
        }
        self.log(EventKind::Scenario { action });
        Ok(())
    }

    /// Runs one world tick. Returns false once the run has terminated.
    pub fn advance(&mut self) -> Result<bool, HarnessError> {
        if self.termination.is_some() {
            return Ok(false);
        }
        let k = self.state.tick_index;
        let t = self.state.time();
        let dt = self.state.tick_period;
        let now = match self.clock {
            Clock::Virtual => t,
            Clock::Wall => {
                let ahead = t - self.wall();
                if ahead > 0.0 {
                    std::thread::sleep(std::time::Duration::from_secs_f64(ahead));
                }
                self.wall()
            }
        };

        while self.next_event < self.script.len() && self.script[self.next_event].at <= t + TIME_EPS {
            let action = self.script[self.next_event].action;
            self.next_event += 1;
            self.apply(action)?;
        }

        // camera frames captured during [t, t + dt) see this tick's world
        loop {
            let c = next_capture_time(self.next_frame, &self.camera, 0.0);
            if c >= t + dt - TIME_EPS {
                break;
            }
            self.counters.camera_frames += 1;
            if let Some(det) =
                capture_frame(&self.world, &self.state, &self.camera, &mut self.rng, self.next_frame, c)
            {
                self.inflight.push(det);
            }
            self.next_frame += 1;
        }
        let wall = self.wall();
        for det in self.inflight.release(now) {
            self.counters.detections_delivered += 1;
            self.link.deliver(det, wall)?;
        }

        let lead = self.world.lead(&self.state).map(|(a, gap)| (a.speed, gap));
        let ts = TickState {
            tick: k,
            time: t,
            now,
            ego: self.state.ego,
            lead: lead.map(|(speed, gap)| LeadObservation { gap, speed }),
            reset_eb: std::mem::take(&mut self.reset_eb),
            driver: self.driver,
            mode_requests: std::mem::take(&mut self.mode_requests),
            bench_stop: std::mem::take(&mut self.bench_stop),
        };
        let reply = self.link.exchange(ts)?;
        let cmd = reply.output.command;

        for event in reply.events {
            self.log(EventKind::Gateway { event });
        }
        for tel in &reply.telemetry {
            if let Some(tr) = tel.trigger {
                self.pending_trigger = Some(tr);
                self.log(EventKind::EmergencyBrake {
                    frame: tr.frame,
                    capture_time: tr.capture_time,
                });
            }
        }
        if let Some(tel) = reply.telemetry.last() {
            self.eb_status = tel.eb_status;
            self.perceived = tel.perceived_distance;
        }
        if let Some(tr) = self.pending_trigger {
            if cmd.brake >= 1.0 {
                let applied = now.max(tr.trigger_time);
                self.latencies.push(LatencyRecord {
                    trigger_frame: tr.frame,
                    capture_time: tr.capture_time,
                    trigger_time: tr.trigger_time,
                    brake_applied_time: applied,
                    latency_capture_to_brake: applied - tr.capture_time,
                    onset_time: self.onset,
                    latency_onset_to_brake: self.onset.map(|o| applied - o),
                });
                self.pending_trigger = None;
            }
        }

        let first_base = self.cadence.base_ticks_for(k);
        for b in first_base..first_base + self.cadence.control_every {
            let due = self.cadence.due(b);
            self.counters.base_ticks += 1;
            if due.control {
                self.counters.control_emissions += 1;
            }
            if due.comfort {
                self.counters.comfort_emissions += 1;
                self.turn_signal = cmd.turn_signal;
            }
        }

        let ego = &self.state.ego;
        self.rows.push(TickRow {
            tick: k,
            time: t,
            x: ego.pose.x,
            y: ego.pose.y,
            heading: ego.pose.heading,
            speed: ego.speed,
            steer: ego.steer,
            throttle: cmd.throttle,
            brake: cmd.brake,
            lateral_error: self.world.lateral_error(&self.state),
            gap: lead.map(|(_, gap)| gap),
            mode: reply.output.mode,
            eb_status: self.eb_status,
            turn_signal: self.turn_signal,
            channel: reply.output.active,
            fresh: reply.output.fresh,
            perceived_distance: self.perceived,
        });
        self.last_output = Some(reply.output);

        if let Some(reason) = reply.error {
            self.diverge(k, reason);
            return Ok(false);
        }

        let barrier = TickBarrier::with_all(k, self.world.participants());
        self.state = self.world.step(&self.state, &barrier, &cmd)?;

        if let Some(reason) = self.collision() {
            self.diverge(self.state.tick_index, reason);
            return Ok(false);
        }
        if self.state.tick_index >= self.total_ticks {
            self.termination = Some(Termination::Completed);
            return Ok(false);
        }
        Ok(true)
    }

    fn diverge(&mut self, tick: u64, reason: String) {
        self.log(EventKind::Terminated {
            reason: reason.clone(),
        });
        self.termination = Some(Termination::Diverged { tick, reason });
    }

    fn collision(&self) -> Option<String> {
        let half_lane = self.world.path.lane_width() / 2.0;
        let body = self.world.vehicle.front_extent() + self.world.vehicle.rear_extent();
        for a in &self.state.actors {
            let gap = self.world.bumper_gap(&self.state, a);
            let hit = match a.kind {
                ActorKind::LeadVehicle => gap <= 0.0 && gap > -(body + a.extent.front + a.extent.rear),
                ActorKind::Pedestrian => {
                    gap <= 0.0 && gap > -body && a.motion.lateral_offset.abs() <= half_lane
                }
                ActorKind::EgoVehicle => false,
            };
            if hit {
                return Some(format!("collision with {:?} {} (gap {gap:.3} m)", a.kind, a.id));
            }
        }
        None
    }

    /// Closes the link and assembles the log.
    pub fn finish(mut self) -> Result<(RunLog, Option<Transcript>), HarnessError> {
        if self.termination.is_none() {
            self.stop("finished early");
        }
        let reason = match &self.termination {
            Some(Termination::Completed) => "run finished",
            _ => "run terminated",
        };
        self.link.close(reason)?;
        let transcript = self.link.transcript();
        Ok((
            RunLog {
                meta: self.meta,
                rows: self.rows,
                latencies: self.latencies,
                events: self.events,
                termination: self.termination.expect("set above"),
                counters: self.counters,
            },
            transcript,
        ))
    }

    pub fn mode(&self) -> GatewayMode {
        self.last_output.map(|o| o.mode).unwrap_or_default()
    }
}
