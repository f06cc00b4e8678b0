//! Constant-time-gap adaptive cruise control and the pedal mapping.

use serde::{Deserialize, Serialize};

use crate::dynamics::{resistance_force, VehicleParams};
use crate::error::ParamError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccParams {
    pub standstill_gap: f64,
    pub time_gap: f64,
    pub gap_gain: f64,
    pub speed_gain: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    pub cruise_speed: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            standstill_gap: 5.0,
            time_gap: 1.5,
            gap_gain: 0.2,
            speed_gain: 0.4,
            accel_min: -6.0,
            accel_max: 2.0,
            cruise_speed: 13.89,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.standstill_gap.is_nan() || self.standstill_gap <= 0.0 {
            return Err(ParamError::invalid("acc.standstill_gap", "must be > 0"));
        }
        if self.time_gap.is_nan() || self.time_gap <= 0.0 {
            return Err(ParamError::invalid("acc.time_gap", "must be > 0"));
        }
        if !(self.accel_min < 0.0 && self.accel_max > 0.0) {
            return Err(ParamError::invalid("acc.accel_min/max", "need accel_min < 0 < accel_max"));
        }
        for (name, v) in [
            ("acc.gap_gain", self.gap_gain),
            ("acc.speed_gain", self.speed_gain),
            ("acc.cruise_speed", self.cruise_speed),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ParamError::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn desired_gap(&self, v_ego: f64) -> f64 {
        self.standstill_gap + self.time_gap * v_ego
    }

    fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.accel_min, self.accel_max)
    }
}

/// Gap-regulating law: `kp·(gap − d0 − τ·v_ego) + kv·(v_lead − v_ego)`, clamped.
pub fn acc_law(gap: f64, v_ego: f64, v_lead: f64, params: &AccParams) -> f64 {
    let error = gap - params.desired_gap(v_ego);
    params.clamp(params.gap_gain * error + params.speed_gain * (v_lead - v_ego))
}

/// Speed regulation toward the cruise set point.
pub fn cruise_law(v_ego: f64, params: &AccParams) -> f64 {
    params.clamp(params.speed_gain * (params.cruise_speed - v_ego))
}

/// Desired acceleration given an optional lead `(gap, speed)`. With a lead the
/// more conservative of following and cruising wins, so the ego never
/// exceeds the set speed behind a fast or distant lead.
pub fn desired_accel(lead: Option<(f64, f64)>, v_ego: f64, params: &AccParams) -> f64 {
    let cruise = cruise_law(v_ego, params);
    match lead {
        Some((gap, v_lead)) => acc_law(gap, v_ego, v_lead, params).min(cruise),
        None => cruise,
    }
}

/// Feed-forward inversion of the longitudinal model. Throttle and brake are
/// never both non-zero.
pub fn accel_to_pedals(a_des: f64, v_ego: f64, params: &VehicleParams) -> (f64, f64) {
    let force = params.mass * a_des + resistance_force(v_ego, params);
    if force >= 0.0 {
        ((force / params.max_traction_force).min(1.0), 0.0)
    } else {
        (0.0, (-force / (params.mass * params.max_brake_decel)).min(1.0))
    }
}
