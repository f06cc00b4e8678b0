//! The authoritative world: ego digital twin, scripted actors and the
//! synchronous tick that only advances once every participant has reported.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_ego, EgoVehicleState, VehicleParams};
use crate::error::WorldError;
use crate::gateway::ControlCommand;
use crate::geometry::Pose2D;
use crate::map::WaypointPath;

pub const DEFAULT_TICK_PERIOD: f64 = 0.020;

pub type ActorId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActorKind {
    EgoVehicle,
    LeadVehicle,
    Pedestrian,
}

/// Body length ahead of and behind an actor's pose reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyExtent {
    pub front: f64,
    pub rear: f64,
}

impl BodyExtent {
    pub fn for_kind(kind: ActorKind, vehicle: &VehicleParams) -> Self {
        match kind {
            ActorKind::Pedestrian => Self {
                front: 0.0,
                rear: 0.0,
            },
            ActorKind::EgoVehicle | ActorKind::LeadVehicle => Self {
                front: vehicle.front_extent(),
                rear: vehicle.rear_extent(),
            },
        }
    }
}

/// Closed-form centerline motion for scripted actors, anchored at a tick.
/// Position is always recomputed from the anchor, so constant-speed scripts
/// accumulate no drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedMotion {
    pub anchor_tick: u64,
    pub anchor_s: f64,
    pub anchor_speed: f64,
    /// Constant acceleration; a negative value decelerates to a stop and holds.
    pub accel: f64,
    pub lateral_offset: f64,
}

impl ScriptedMotion {
    /// Arc length and speed after `elapsed` seconds.
    pub fn evaluate(&self, elapsed: f64) -> (f64, f64) {
        let v0 = self.anchor_speed;
        let a = self.accel;
        if a < 0.0 {
            let t_stop = v0 / -a;
            if elapsed >= t_stop {
                return (self.anchor_s + v0 * t_stop + 0.5 * a * t_stop * t_stop, 0.0);
            }
        }
        if a == 0.0 {
            return (self.anchor_s + v0 * elapsed, v0);
        }
        (
            self.anchor_s + v0 * elapsed + 0.5 * a * elapsed * elapsed,
            (v0 + a * elapsed).max(0.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: ActorId,
    pub kind: ActorKind,
    pub pose: Pose2D,
    pub speed: f64,
    pub spawned_at: f64,
    pub extent: BodyExtent,
    pub motion: ScriptedMotion,
    /// Arc length of the reference point along the centerline.
    pub route_s: f64,
}

/// Snapshot of the world at one tick. Time is derived from the tick index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick_index: u64,
    pub tick_period: f64,
    pub ego: EgoVehicleState,
    pub actors: Vec<ActorState>,
    next_actor_id: ActorId,
}

impl WorldState {
    pub fn new(ego: EgoVehicleState, tick_period: f64) -> Self {
        Self {
            tick_index: 0,
            tick_period,
            ego,
            actors: Vec::new(),
            next_actor_id: 1,
        }
    }

    pub fn time(&self) -> f64 {
        self.tick_index as f64 * self.tick_period
    }

    pub fn actor(&self, id: ActorId) -> Option<&ActorState> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn next_actor_id(&self) -> ActorId {
        self.next_actor_id
    }
}

/// A synchronous participant that must report before a tick can advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Participant {
    Controller,
    Dynamics,
    ScriptedActors,
}

/// Completion evidence collected for one tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickBarrier {
    tick: u64,
    reported: BTreeSet<Participant>,
}

impl TickBarrier {
    pub fn new(tick: u64) -> Self {
        Self {
            tick,
            reported: BTreeSet::new(),
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn report(&mut self, participant: Participant) -> &mut Self {
        self.reported.insert(participant);
        self
    }

    pub fn with_all(tick: u64, participants: &[Participant]) -> Self {
        let mut b = Self::new(tick);
        for p in participants {
            b.report(*p);
        }
        b
    }

    pub fn has(&self, participant: Participant) -> bool {
        self.reported.contains(&participant)
    }
}

/// Static world description shared by every step.
#[derive(Debug, Clone)]
pub struct World {
    pub path: Arc<WaypointPath>,
    pub vehicle: VehicleParams,
    participants: Vec<Participant>,
}

impl World {
    pub fn new(path: Arc<WaypointPath>, vehicle: VehicleParams) -> Self {
        Self {
            path,
            vehicle,
            participants: vec![
                Participant::Controller,
                Participant::Dynamics,
                Participant::ScriptedActors,
            ],
        }
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn set_participants(&mut self, participants: Vec<Participant>) {
        self.participants = participants;
    }

    /// Initial world with the ego placed on the centerline at `s` with `speed`.
    pub fn initial_state(&self, s: f64, speed: f64, tick_period: f64) -> WorldState {
        let mut ego = EgoVehicleState::at_rest(self.path.pose_at(s));
        ego.speed = speed;
        WorldState::new(ego, tick_period)
    }

    /// Advances the world by one tick using `command` for the ego.
    pub fn step(
        &self,
        state: &WorldState,
        barrier: &TickBarrier,
        command: &ControlCommand,
    ) -> Result<WorldState, WorldError> {
        if barrier.tick != state.tick_index {
            return Err(WorldError::StaleCompletion {
                expected: state.tick_index,
                got: barrier.tick,
            });
        }
        if let Some(missing) = self.participants.iter().find(|p| !barrier.has(**p)) {
            return Err(WorldError::ParticipantMissing {
                participant: format!("{missing:?}"),
                tick: state.tick_index,
            });
        }
        let mut next = state.clone();
        next.tick_index += 1;
        next.ego = step_ego(&state.ego, command, &self.vehicle, state.tick_period);
        for actor in &mut next.actors {
            self.place_actor(actor, next.tick_index, state.tick_period);
        }
        Ok(next)
    }

    fn place_actor(&self, actor: &mut ActorState, tick: u64, tick_period: f64) {
        let elapsed = tick.saturating_sub(actor.motion.anchor_tick) as f64 * tick_period;
        let (s, speed) = actor.motion.evaluate(elapsed);
        let mut pose = self.path.pose_at(s);
        if actor.motion.lateral_offset != 0.0 {
            let h = pose.heading;
            pose.x -= actor.motion.lateral_offset * h.sin();
            pose.y += actor.motion.lateral_offset * h.cos();
        }
        actor.pose = pose;
        actor.speed = speed;
        actor.route_s = s;
    }

    /// Adds an actor at `pose`; it then moves along the centerline at `speed`.
    pub fn spawn_actor(
        &self,
        state: &mut WorldState,
        kind: ActorKind,
        pose: Pose2D,
        speed: f64,
    ) -> Result<ActorId, WorldError> {
        if !pose.is_finite() || !speed.is_finite() {
            return Err(WorldError::NonFinite);
        }
        let proj = self.path.project(pose.x, pose.y);
        self.insert_actor(state, kind, proj.s, proj.signed_offset, speed, 0.0)
    }

    /// Spawns an actor on the centerline `distance` meters of arc length ahead
    /// of the ego's projection. This is how detected objects get their twin.
    pub fn spawn_actor_ahead(
        &self,
        state: &mut WorldState,
        kind: ActorKind,
        distance: f64,
        speed: f64,
    ) -> Result<ActorId, WorldError> {
        if !distance.is_finite() || !speed.is_finite() {
            return Err(WorldError::NonFinite);
        }
        let ego_s = self.path.project(state.ego.pose.x, state.ego.pose.y).s;
        self.insert_actor(state, kind, ego_s + distance, 0.0, speed, 0.0)
    }

    /// Low-level insertion with a fully specified script.
    pub fn insert_actor(
        &self,
        state: &mut WorldState,
        kind: ActorKind,
        s: f64,
        lateral_offset: f64,
        speed: f64,
        accel: f64,
    ) -> Result<ActorId, WorldError> {
        let id = state.next_actor_id;
        self.insert_actor_with_id(state, id, kind, s, lateral_offset, speed, accel)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn insert_actor_with_id(
        &self,
        state: &mut WorldState,
        id: ActorId,
        kind: ActorKind,
        s: f64,
        lateral_offset: f64,
        speed: f64,
        accel: f64,
    ) -> Result<ActorId, WorldError> {
        if ![s, lateral_offset, speed, accel].iter().all(|v| v.is_finite()) {
            return Err(WorldError::NonFinite);
        }
        if state.actor(id).is_some() {
            return Err(WorldError::DuplicateActor(id));
        }
        let mut actor = ActorState {
            id,
            kind,
            pose: Pose2D::origin(),
            speed: speed.max(0.0),
            spawned_at: state.time(),
            extent: BodyExtent::for_kind(kind, &self.vehicle),
            motion: ScriptedMotion {
                anchor_tick: state.tick_index,
                anchor_s: self.path.wrap_s(s),
                anchor_speed: speed.max(0.0),
                accel,
                lateral_offset,
            },
            route_s: 0.0,
        };
        self.place_actor(&mut actor, state.tick_index, state.tick_period);
        state.actors.push(actor);
        state.next_actor_id = state.next_actor_id.max(id + 1);
        Ok(id)
    }

    pub fn remove_actor(&self, state: &mut WorldState, id: ActorId) -> Result<(), WorldError> {
        let before = state.actors.len();
        state.actors.retain(|a| a.id != id);
        if state.actors.len() == before {
            return Err(WorldError::UnknownActor(id));
        }
        Ok(())
    }

    /// Re-anchors an actor's script at the current tick with new speed and
    /// acceleration.
    pub fn retime_actor(
        &self,
        state: &mut WorldState,
        id: ActorId,
        speed: f64,
        accel: f64,
    ) -> Result<(), WorldError> {
        let tick = state.tick_index;
        let actor = state
            .actors
            .iter_mut()
            .find(|a| a.id == id)
            .ok_or(WorldError::UnknownActor(id))?;
        actor.motion = ScriptedMotion {
            anchor_tick: tick,
            anchor_s: actor.route_s,
            anchor_speed: speed.max(0.0),
            accel,
            lateral_offset: actor.motion.lateral_offset,
        };
        actor.speed = speed.max(0.0);
        Ok(())
    }

    /// Arc length of the ego's projection onto the centerline.
    pub fn ego_s(&self, state: &WorldState) -> f64 {
        self.path.project(state.ego.pose.x, state.ego.pose.y).s
    }

    /// Bumper-to-bumper gap from the ego's front to `actor`'s rear, measured
    /// along the centerline.
    pub fn bumper_gap(&self, state: &WorldState, actor: &ActorState) -> f64 {
        self.bumper_gap_from(self.ego_s(state), actor)
    }

    fn bumper_gap_from(&self, ego_s: f64, actor: &ActorState) -> f64 {
        self.path.arc_delta(ego_s, actor.route_s) - (self.vehicle.front_extent() + actor.extent.rear)
    }

    /// Gap to the nearest lead vehicle not behind the ego, if any.
    pub fn distance_to_lead(&self, state: &WorldState) -> Option<f64> {
        self.lead(state).map(|(_, gap)| gap)
    }

    /// Nearest lead vehicle not behind the ego, with its bumper gap.
    pub fn lead<'a>(&self, state: &'a WorldState) -> Option<(&'a ActorState, f64)> {
        let ego_s = self.ego_s(state);
        state
            .actors
            .iter()
            .filter(|a| a.kind == ActorKind::LeadVehicle)
            .filter(|a| self.path.arc_delta(ego_s, a.route_s) >= -self.vehicle.rear_extent())
            .map(|a| (a, self.bumper_gap_from(ego_s, a)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn lateral_error(&self, state: &WorldState) -> f64 {
        self.path.lateral_error(&state.ego.pose)
    }
}
