//! Waypoint planning on the ground-truth centerline and pure-pursuit steering.

use serde::{Deserialize, Serialize};

use crate::dynamics::{EgoVehicleState, VehicleParams};
use crate::error::{OffTrack, ParamError};
use crate::geometry::normalize_angle;
use crate::map::WaypointPath;

/// Spacing of planned target points along the centerline.
pub const TARGET_SPACING: f64 = 1.0;
/// Lateral distance, in lane widths, beyond which the ego counts as off track.
pub const OFF_TRACK_LANES: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LkaParams {
    pub lookahead_base: f64,
    /// Seconds of travel added to the lookahead: `ld = base + gain * speed`.
    pub lookahead_speed_gain: f64,
    pub horizon: f64,
}

impl Default for LkaParams {
    fn default() -> Self {
        Self {
            lookahead_base: 2.0,
            lookahead_speed_gain: 0.3,
            horizon: 30.0,
        }
    }
}

impl LkaParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.lookahead_base.is_finite() && self.lookahead_base > 0.0) {
            return Err(ParamError::invalid("lka.lookahead_base", "must be > 0"));
        }
        if !(self.lookahead_speed_gain.is_finite() && self.lookahead_speed_gain >= 0.0) {
            return Err(ParamError::invalid("lka.lookahead_speed_gain", "must be >= 0"));
        }
        if !(self.horizon.is_finite() && self.horizon >= TARGET_SPACING) {
            return Err(ParamError::invalid("lka.horizon", "must be >= 1 m"));
        }
        Ok(())
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        self.lookahead_base + self.lookahead_speed_gain * speed
    }
}

/// A planned point with its arc distance ahead of the ego's projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub x: f64,
    pub y: f64,
    pub arc: f64,
}

/// Centerline points from the ego's projection forward by `horizon`, spaced
/// 1 m apart. Loops wrap past the seam.
pub fn plan_waypoints(
    path: &WaypointPath,
    ego: &EgoVehicleState,
    horizon: f64,
) -> Result<Vec<TargetPoint>, OffTrack> {
    let proj = path.project(ego.pose.x, ego.pose.y);
    let limit = path.lane_width() * OFF_TRACK_LANES;
    if proj.distance > limit {
        return Err(OffTrack {
            distance: proj.distance,
            limit,
        });
    }
    let n = (horizon / TARGET_SPACING).floor() as usize;
    Ok((1..=n)
        .map(|k| {
            let arc = k as f64 * TARGET_SPACING;
            let p = path.pose_at(proj.s + arc);
            TargetPoint { x: p.x, y: p.y, arc }
        })
        .collect())
}

/// Pure pursuit from the rear axle: `δ = atan(2·L·sin α / d)` toward the first
/// target at least one lookahead distance ahead along the path, where `α` is
/// the bearing relative to the heading and `d` the straight-line distance to
/// that point. The result is clamped to the steering range.
pub fn lateral_control(
    ego: &EgoVehicleState,
    targets: &[TargetPoint],
    params: &LkaParams,
    vehicle: &VehicleParams,
) -> f64 {
    let Some(last) = targets.last() else {
        return 0.0;
    };
    let ld = params.lookahead(ego.speed);
    let target = targets.iter().find(|t| t.arc >= ld).unwrap_or(last);
    let dx = target.x - ego.pose.x;
    let dy = target.y - ego.pose.y;
    let d = dx.hypot(dy);
    if d <= f64::EPSILON {
        return 0.0;
    }
    let alpha = normalize_angle(dy.atan2(dx) - ego.pose.heading);
    pure_pursuit_angle(alpha, d, vehicle.wheelbase).clamp(-vehicle.max_steer, vehicle.max_steer)
}

pub fn pure_pursuit_angle(alpha: f64, lookahead: f64, wheelbase: f64) -> f64 {
    (2.0 * wheelbase * alpha.sin() / lookahead).atan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::map::{bundled_map, OVAL_588, STRAIGHT_1KM};

    fn ego_at(x: f64, y: f64, heading: f64, speed: f64) -> EgoVehicleState {
        EgoVehicleState {
            speed,
            ..EgoVehicleState::at_rest(Pose2D::new(x, y, heading))
        }
    }

    #[test]
    fn straight_resampling() {
        let road = bundled_map(STRAIGHT_1KM).unwrap();
        let t = plan_waypoints(&road, &ego_at(0.0, 0.0, 0.0, 0.0), 10.0).unwrap();
        assert_eq!(t.len(), 10);
        for (i, p) in t.iter().enumerate() {
            assert!((p.x - (i + 1) as f64).abs() < 1e-12);
            assert_eq!(p.y, 0.0);
        }
    }

    #[test]
    fn loop_planning_wraps_past_seam() {
        let oval = bundled_map(OVAL_588).unwrap();
        let len = oval.length();
        let start = oval.pose_at(585.0);
        let t = plan_waypoints(&oval, &ego_at(start.x, start.y, start.heading, 0.0), 10.0).unwrap();
        assert_eq!(t.len(), 10);
        // arc-length oracle: point k sits at s = (585 + k) mod len
        for (k, p) in t.iter().enumerate() {
            let s = (585.0 + (k + 1) as f64).rem_euclid(len);
            let q = oval.pose_at(s);
            assert!((p.x - q.x).abs() < 1e-6 && (p.y - q.y).abs() < 1e-6);
        }
        let last = t.last().unwrap();
        let first = oval.points()[0];
        // 595 - 588.4.. ≈ 6.6 m past the seam, on the lower straight
        assert!(last.y < -29.9 && last.x > first.x);
    }

    #[test]
    fn off_track_detected() {
        let road = bundled_map(STRAIGHT_1KM).unwrap();
        let e = plan_waypoints(&road, &ego_at(50.0, 20.0, 0.0, 0.0), 10.0).unwrap_err();
        assert_eq!(e.distance, 20.0);
        assert_eq!(e.limit, 17.5);
    }

    #[test]
    fn aligned_target_gives_zero_steer() {
        let road = bundled_map(STRAIGHT_1KM).unwrap();
        let ego = ego_at(0.0, 0.0, 0.0, 10.0);
        let t = plan_waypoints(&road, &ego, 30.0).unwrap();
        assert_eq!(lateral_control(&ego, &t, &LkaParams::default(), &VehicleParams::default()), 0.0);
    }

    #[test]
    fn hand_evaluated_angle() {
        let d = pure_pursuit_angle(30f64.to_radians(), 10.0, 2.99);
        assert!((d - 0.299f64.atan()).abs() < 1e-12);
        assert!((d - 0.29054).abs() < 1e-5);
    }

    #[test]
    fn mirror_symmetry() {
        for a in [0.01, 0.2, 0.7, 1.3] {
            assert_eq!(pure_pursuit_angle(-a, 7.0, 2.99), -pure_pursuit_angle(a, 7.0, 2.99));
        }
        let vp = VehicleParams::default();
        let lka = LkaParams::default();
        let left = [TargetPoint { x: 10.0, y: 3.0, arc: 10.0 }];
        let right = [TargetPoint { x: 10.0, y: -3.0, arc: 10.0 }];
        let ego = ego_at(0.0, 0.0, 0.0, 5.0);
        assert_eq!(
            lateral_control(&ego, &left, &lka, &vp),
            -lateral_control(&ego, &right, &lka, &vp)
        );
    }

    #[test]
    fn steering_is_clamped() {
        let vp = VehicleParams::default();
        let t = [TargetPoint { x: 0.5, y: 5.0, arc: 5.0 }];
        let d = lateral_control(&ego_at(0.0, 0.0, 0.0, 0.0), &t, &LkaParams::default(), &vp);
        assert_eq!(d, vp.max_steer);
    }
}
