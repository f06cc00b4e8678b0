//! Longitudinal force balance plus kinematic bicycle model. This stands in for
//! the dynamometer bench: it turns pedal and steering commands into ego motion.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::gateway::ControlCommand;
use crate::geometry::Pose2D;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub mass: f64,
    pub wheelbase: f64,
    pub max_traction_force: f64,
    pub max_brake_decel: f64,
    /// Rolling-resistance coefficient.
    pub c_rr: f64,
    /// Lumped aerodynamic coefficient ½ρ·Cd·A, N/(m/s)².
    pub c_aero: f64,
    pub max_steer: f64,
    pub front_overhang: f64,
    pub rear_overhang: f64,
    pub steer_rate_limit: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 2500.0,
            wheelbase: 2.99,
            max_traction_force: 7000.0,
            max_brake_decel: 8.0,
            c_rr: 0.012,
            c_aero: 0.42,
            max_steer: 0.5,
            front_overhang: 0.9,
            rear_overhang: 1.0,
            steer_rate_limit: 0.8,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("mass", self.mass),
            ("wheelbase", self.wheelbase),
            ("max_traction_force", self.max_traction_force),
            ("max_brake_decel", self.max_brake_decel),
            ("c_rr", self.c_rr),
            ("c_aero", self.c_aero),
            ("max_steer", self.max_steer),
            ("front_overhang", self.front_overhang),
            ("rear_overhang", self.rear_overhang),
            ("steer_rate_limit", self.steer_rate_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if self.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err(ParamError::invalid("max_steer", "must be below π/2"));
        }
        Ok(())
    }

    /// Distance from the pose reference point (rear axle) to the front bumper.
    pub fn front_extent(&self) -> f64 {
        self.wheelbase + self.front_overhang
    }

    /// Distance from the pose reference point (rear axle) to the rear bumper.
    pub fn rear_extent(&self) -> f64 {
        self.rear_overhang
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Gear {
    #[default]
    Drive,
    Neutral,
}

/// Measured ego state. The pose reference point is the rear axle center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoVehicleState {
    pub pose: Pose2D,
    pub speed: f64,
    /// Acceleration realised over the last step.
    pub accel: f64,
    /// Steering actuator position.
    pub steer: f64,
    pub gear: Gear,
}

impl EgoVehicleState {
    pub fn at_rest(pose: Pose2D) -> Self {
        Self {
            pose,
            speed: 0.0,
            accel: 0.0,
            steer: 0.0,
            gear: Gear::Drive,
        }
    }
}

/// Rolling plus aerodynamic drag at `speed`.
pub fn resistance_force(speed: f64, params: &VehicleParams) -> f64 {
    params.c_rr * params.mass * GRAVITY + params.c_aero * speed * speed
}

/// Advances the ego by one step of `dt` seconds.
///
/// Speed integrates the net longitudinal force and is clamped at zero. The
/// steering actuator slews toward the command at a bounded rate; heading is
/// updated first with the new steering angle and the position then moves
/// along the updated heading.
pub fn step_ego(
    state: &EgoVehicleState,
    cmd: &ControlCommand,
    params: &VehicleParams,
    dt: f64,
) -> EgoVehicleState {
    let max_slew = params.steer_rate_limit * dt;
    let target = cmd.steer.clamp(-params.max_steer, params.max_steer);
    let steer = (state.steer + (target - state.steer).clamp(-max_slew, max_slew))
        .clamp(-params.max_steer, params.max_steer);

    let traction = match state.gear {
        Gear::Drive => cmd.throttle * params.max_traction_force,
        Gear::Neutral => 0.0,
    };
    let braking = cmd.brake * params.mass * params.max_brake_decel;
    let net = traction - braking - resistance_force(state.speed, params);
    let speed = (state.speed + net / params.mass * dt).max(0.0);

    let mut pose = state.pose;
    pose.rotate_by(state.speed / params.wheelbase * steer.tan() * dt);
    pose.advance(state.speed * dt);

    EgoVehicleState {
        pose,
        speed,
        accel: (speed - state.speed) / dt,
        steer,
        gear: state.gear,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::TurnSignal;
    use proptest::prelude::*;

    fn cmd(throttle: f64, brake: f64, steer: f64) -> ControlCommand {
        ControlCommand {
            throttle,
            brake,
            steer,
            turn_signal: TurnSignal::Off,
            issued_at: 0.0,
            seq: 0,
        }
    }

    fn moving(speed: f64, steer: f64) -> EgoVehicleState {
        EgoVehicleState {
            speed,
            steer,
            ..EgoVehicleState::at_rest(Pose2D::origin())
        }
    }

    #[test]
    fn resistance_examples() {
        let p = VehicleParams::default();
        assert!((resistance_force(0.0, &p) - 294.3).abs() < 1e-9);
        let aero_only = VehicleParams { c_rr: 0.0, ..p };
        let r10 = resistance_force(10.0, &aero_only);
        let r20 = resistance_force(20.0, &aero_only);
        assert!((r20 - 4.0 * r10).abs() < 1e-9);
        let frictionless = VehicleParams {
            c_rr: 0.0,
            c_aero: 0.0,
            ..p
        };
        assert_eq!(resistance_force(33.0, &frictionless), 0.0);
    }

    #[test]
    fn default_params_validate() {
        VehicleParams::default().validate().unwrap();
        let bad = VehicleParams {
            max_steer: 1.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = VehicleParams {
            mass: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn standstill_stays_put() {
        let p = VehicleParams::default();
        let s = step_ego(&moving(0.0, 0.0), &cmd(0.0, 0.0, 0.0), &p, 0.02);
        assert_eq!(s.speed, 0.0);
        assert_eq!(s.pose, Pose2D::origin());
    }

    #[test]
    fn straight_motion_advances_speed_times_dt() {
        let p = VehicleParams::default();
        let s = step_ego(&moving(10.0, 0.0), &cmd(0.0, 0.0, 0.0), &p, 0.02);
        assert_eq!(s.pose.heading, 0.0);
        assert!((s.pose.x - 0.2).abs() < 1e-15);
        assert_eq!(s.pose.y, 0.0);
    }

    #[test]
    fn bicycle_heading_rate() {
        let p = VehicleParams::default();
        let s = step_ego(&moving(10.0, 0.1), &cmd(0.0, 0.0, 0.1), &p, 0.02);
        let expected = 10.0 / 2.99 * 0.1f64.tan() * 0.02;
        assert!((s.pose.heading - expected).abs() < 1e-15);
        assert!((s.pose.heading - 6.711e-3).abs() < 1e-6);
    }

    #[test]
    fn neutral_cuts_traction() {
        let p = VehicleParams::default();
        let mut st = moving(5.0, 0.0);
        st.gear = Gear::Neutral;
        let s = step_ego(&st, &cmd(1.0, 0.0, 0.0), &p, 0.02);
        assert!(s.speed < 5.0);
    }

    /// Fits the turning radius from one simulated loop: the centroid of the
    /// sampled positions is the circle center, the mean distance the radius.
    fn simulated_radius(delta: f64) -> f64 {
        let p = VehicleParams {
            c_rr: 1e-12,
            c_aero: 1e-12,
            ..Default::default()
        };
        let v = 8.0;
        let mut st = moving(v, delta);
        let omega = v / p.wheelbase * delta.tan();
        let steps = (2.0 * std::f64::consts::PI / omega / 0.02).round() as usize;
        let mut pts = Vec::with_capacity(steps);
        for _ in 0..steps {
            st = step_ego(&st, &cmd(0.0, 0.0, delta), &p, 0.02);
            st.speed = v;
            pts.push((st.pose.x, st.pose.y));
        }
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
        pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n
    }

    #[test]
    fn turning_radius_matches_bicycle_geometry() {
        for delta in [0.05, 0.1, 0.2] {
            let expected = 2.99 / f64::tan(delta);
            let got = simulated_radius(delta);
            assert!(((got - expected) / expected).abs() < 0.01, "δ={delta}: {got} vs {expected}");
        }
        assert!((2.99 / 0.1f64.tan() - 29.80).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn speed_never_negative_and_steer_slew_bounded(
            speed in 0.0f64..25.0,
            steer in -0.5f64..0.5,
            throttle in 0.0f64..=1.0,
            brake in 0.0f64..=1.0,
            target in -0.5f64..0.5,
        ) {
            let p = VehicleParams::default();
            let s = step_ego(&moving(speed, steer), &cmd(throttle, brake, target), &p, 0.02);
            prop_assert!(s.speed >= 0.0);
            prop_assert!((s.steer - steer).abs() <= p.steer_rate_limit * 0.02 + 1e-12);
            prop_assert!(s.steer.abs() <= p.max_steer);
        }

        #[test]
        fn coasting_never_speeds_up(speed in 0.0f64..25.0, steer in -0.5f64..0.5) {
            let p = VehicleParams::default();
            let s = step_ego(&moving(speed, steer), &cmd(0.0, 0.0, steer), &p, 0.02);
            prop_assert!(s.speed <= speed);
        }

        #[test]
        fn step_is_pure(speed in 0.0f64..25.0, throttle in 0.0f64..=1.0) {
            let p = VehicleParams::default();
            let st = moving(speed, 0.01);
            let a = step_ego(&st, &cmd(throttle, 0.0, 0.2), &p, 0.02);
            let b = step_ego(&st, &cmd(throttle, 0.0, 0.2), &p, 0.02);
            prop_assert_eq!(a, b);
        }
    }
}
