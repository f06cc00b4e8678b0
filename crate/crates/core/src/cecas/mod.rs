//! Central car server: perception consumption, waypoint planning, lane
//! keeping, adaptive cruise control and the emergency brake, producing one
//! E2E-framed command per control cycle.

mod acc;
mod ebrake;
mod lka;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use acc::{accel_to_pedals, acc_law, cruise_law, desired_accel, AccParams};
pub use ebrake::{emergency_brake_update, BrakeOverride, EbStatus, EmergencyBrakeState};
pub use lka::{
    lateral_control, plan_waypoints, pure_pursuit_angle, LkaParams, TargetPoint, OFF_TRACK_LANES,
    TARGET_SPACING,
};

use crate::dynamics::{EgoVehicleState, VehicleParams};
use crate::error::OffTrack;
use crate::gateway::{
    mode_request_payload, ControlCommand, E2EFrame, FrameSender, ModeRequest, ModeSource,
    TurnSignal, DATA_ID_CONTROL_PRIMARY, DATA_ID_CONTROL_SECONDARY, DATA_ID_MODE_REQUEST,
};
use crate::map::WaypointPath;
use crate::sensors::{select_perception, Detection, PerceptionMailbox};

pub const DEFAULT_TRIGGER_DISTANCE: f64 = 25.0;

/// Range and closing information about the vehicle ahead, from the simulated
/// range sensor on the world side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadObservation {
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CecasConfig {
    pub vehicle: VehicleParams,
    pub acc: AccParams,
    pub lka: LkaParams,
    pub trigger_distance: f64,
    /// Ask the gateway for external control on the first cycle.
    pub request_external: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleInput {
    pub tick: u64,
    /// Virtual time of the tick.
    pub time: f64,
    /// Perception clock: virtual in the internal stage, wall-clock otherwise.
    pub now: f64,
    pub ego: EgoVehicleState,
    pub lead: Option<LeadObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerInfo {
    pub frame: u64,
    pub capture_time: f64,
    pub trigger_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CecasTelemetry {
    pub tick: u64,
    pub eb_status: EbStatus,
    /// Set on the cycle where the emergency brake latched.
    pub trigger: Option<TriggerInfo>,
    pub desired_accel: f64,
    pub command: ControlCommand,
    pub perception_frame: Option<u64>,
    /// Nearest object in the held perception result.
    pub perceived_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CecasOutput {
    pub frames: Vec<E2EFrame>,
    pub telemetry: CecasTelemetry,
}

pub struct CentralCarServer {
    cfg: CecasConfig,
    path: Arc<WaypointPath>,
    mailbox: PerceptionMailbox,
    eb: EmergencyBrakeState,
    primary: FrameSender,
    secondary: FrameSender,
    mode: FrameSender,
    requested: bool,
    seq: u32,
}

impl CentralCarServer {
    pub fn new(path: Arc<WaypointPath>, cfg: CecasConfig) -> Self {
        Self {
            eb: EmergencyBrakeState::new(cfg.trigger_distance),
            cfg,
            path,
            mailbox: PerceptionMailbox::default(),
            primary: FrameSender::new(DATA_ID_CONTROL_PRIMARY),
            secondary: FrameSender::new(DATA_ID_CONTROL_SECONDARY),
            mode: FrameSender::new(DATA_ID_MODE_REQUEST),
            requested: false,
            seq: 0,
        }
    }

    pub fn deliver(&mut self, detection: Detection) {
        self.mailbox.deliver(detection);
    }

    pub fn emergency_brake(&self) -> &EmergencyBrakeState {
        &self.eb
    }

    pub fn reset_emergency_brake(&mut self) {
        self.eb.reset();
    }

    /// One control cycle. Fails only when the ego has left the road.
    pub fn cycle(&mut self, input: &CycleInput) -> Result<CecasOutput, OffTrack> {
        let ego = &input.ego;
        let targets = plan_waypoints(&self.path, ego, self.cfg.lka.horizon)?;
        let steer = lateral_control(ego, &targets, &self.cfg.lka, &self.cfg.vehicle);
        let lead = input.lead.map(|l| (l.gap, l.speed));
        let a_des = desired_accel(lead, ego.speed, &self.cfg.acc);
        let (throttle, brake) = accel_to_pedals(a_des, ego.speed, &self.cfg.vehicle);

        let perception = select_perception(&self.mailbox, input.now);
        let (eb, ovr) = emergency_brake_update(&self.eb, perception, input.now);
        let trigger = (eb.status == EbStatus::Braking && self.eb.status == EbStatus::Normal)
            .then(|| TriggerInfo {
                frame: eb.trigger_frame.expect("set on trigger"),
                capture_time: eb.trigger_capture_time.expect("set on trigger"),
                trigger_time: eb.trigger_time.expect("set on trigger"),
            });
        self.eb = eb;

        self.seq = self.seq.wrapping_add(1);
        let mut command = ControlCommand {
            throttle,
            brake,
            steer,
            turn_signal: TurnSignal::Off,
            issued_at: input.time,
            seq: self.seq,
        };
        if let Some(o) = ovr {
            command = o.apply(&command);
        }

        let mut frames = Vec::with_capacity(3);
        if self.cfg.request_external && !self.requested {
            let payload = mode_request_payload(ModeRequest::ExternalControl, ModeSource::Sds);
            frames.push(self.mode.next_frame(&payload).expect("2 byte payload"));
            self.requested = true;
        }
        let payload = command.to_payload();
        frames.push(self.primary.next_frame(&payload).expect("payload fits"));
        frames.push(self.secondary.next_frame(&payload).expect("payload fits"));

        Ok(CecasOutput {
            frames,
            telemetry: CecasTelemetry {
                tick: input.tick,
                eb_status: self.eb.status,
                trigger,
                desired_accel: a_des,
                command,
                perception_frame: perception.map(|d| d.frame_id),
                perceived_distance: perception
                    .and_then(|d| d.nearest_any())
                    .map(|o| o.distance),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_ego;
    use crate::gateway::{decode_and_check, Channel, ChannelState, GatewayConfig, Verdict};
    use crate::geometry::Pose2D;
    use crate::map::{bundled_map, STRAIGHT_1KM};
    use crate::sensors::{DetectedObject, ObjectClass};

    fn cfg() -> CecasConfig {
        CecasConfig {
            vehicle: VehicleParams::default(),
            acc: AccParams::default(),
            lka: LkaParams::default(),
            trigger_distance: DEFAULT_TRIGGER_DISTANCE,
            request_external: true,
        }
    }

    fn straight() -> Arc<WaypointPath> {
        Arc::new(bundled_map(STRAIGHT_1KM).unwrap())
    }

    #[test]
    fn first_cycle_requests_external_control() {
        let mut c = CentralCarServer::new(straight(), cfg());
        let input = CycleInput {
            tick: 0,
            time: 0.0,
            now: 0.0,
            ego: EgoVehicleState::at_rest(Pose2D::origin()),
            lead: None,
        };
        let out = c.cycle(&input).unwrap();
        assert_eq!(out.frames.len(), 3);
        assert_eq!(out.frames[0].data_id, DATA_ID_MODE_REQUEST);
        let out = c.cycle(&CycleInput { tick: 1, ..input }).unwrap();
        assert_eq!(out.frames.len(), 2);
        // alive counters advance per data id
        let st = ChannelState {
            last_counter: Some(0),
            ..ChannelState::new(Channel::Primary, 0.0)
        };
        assert_eq!(
            decode_and_check(&out.frames[0], &st, 0.02, &GatewayConfig::default()).0,
            Verdict::Ok
        );
    }

    #[test]
    fn person_ahead_forces_full_brake_and_keeps_steering() {
        let mut c = CentralCarServer::new(straight(), cfg());
        c.deliver(Detection {
            frame_id: 4,
            capture_time: 0.8,
            delivery_time: 0.85,
            objects: vec![DetectedObject {
                class: ObjectClass::Person,
                distance: 15.0,
                lateral_offset: 0.0,
                confidence: 1.0,
            }],
        });
        let ego = EgoVehicleState {
            speed: 10.0,
            ..EgoVehicleState::at_rest(Pose2D::new(0.0, 0.3, 0.0))
        };
        let out = c
            .cycle(&CycleInput {
                tick: 43,
                time: 0.86,
                now: 0.86,
                ego,
                lead: None,
            })
            .unwrap();
        let t = &out.telemetry;
        assert_eq!(t.eb_status, EbStatus::Braking);
        assert_eq!(t.trigger.unwrap().frame, 4);
        assert_eq!(t.command.brake, 1.0);
        assert_eq!(t.command.throttle, 0.0);
        assert!(t.command.steer < 0.0, "lane keeping still steers back");
        assert_eq!(t.perceived_distance, Some(15.0));
    }

    #[test]
    fn off_track_is_an_error() {
        let mut c = CentralCarServer::new(straight(), cfg());
        let r = c.cycle(&CycleInput {
            tick: 0,
            time: 0.0,
            now: 0.0,
            ego: EgoVehicleState::at_rest(Pose2D::new(10.0, 30.0, 0.0)),
            lead: None,
        });
        assert!(r.is_err());
    }

    /// Closed loop of lane keeping and the bicycle model on the straight road,
    /// starting half a meter off the centerline.
    #[test]
    fn pure_pursuit_converges_from_offset() {
        let path = straight();
        let vp = VehicleParams::default();
        let lka = LkaParams::default();
        let mut ego = EgoVehicleState {
            speed: 10.0,
            ..EgoVehicleState::at_rest(Pose2D::new(0.0, 0.5, 0.0))
        };
        let mut peak_after_settle: f64 = 0.0;
        let mut settled_at = None;
        while ego.pose.x < 990.0 {
            let targets = plan_waypoints(&path, &ego, lka.horizon).unwrap();
            let steer = lateral_control(&ego, &targets, &lka, &vp);
            let cmd = ControlCommand {
                steer,
                ..ControlCommand::neutral()
            };
            ego = step_ego(&ego, &cmd, &vp, 0.02);
            ego.speed = 10.0;
            let err = path.lateral_error(&ego.pose);
            if settled_at.is_none() && err < 0.05 {
                settled_at = Some(ego.pose.x);
            }
            if settled_at.is_some() {
                peak_after_settle = peak_after_settle.max(err);
            }
        }
        let x = settled_at.expect("converged");
        assert!(x < 150.0, "settled after {x} m");
        assert!(peak_after_settle < 0.05, "{peak_after_settle}");
    }
}
