//! Ground-truth camera emulator producing object-list detections on a fixed
//! frame cadence, independent of the world tick.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::world::{ActorKind, World, WorldState};

/// Half-angle of the camera frustum.
pub const FRUSTUM_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_4;
/// Smallest distance ever reported, so noisy objects keep `distance > 0`.
pub const MIN_REPORTED_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectClass {
    Person,
    Vehicle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub class: ObjectClass,
    /// Longitudinal distance from the ego front bumper.
    pub distance: f64,
    pub lateral_offset: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: u64,
    pub capture_time: f64,
    pub delivery_time: f64,
    pub objects: Vec<DetectedObject>,
}

impl Detection {
    pub fn nearest(&self, class: ObjectClass) -> Option<&DetectedObject> {
        self.objects
            .iter()
            .filter(|o| o.class == class)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }

    pub fn nearest_any(&self) -> Option<&DetectedObject> {
        self.objects
            .iter()
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub fps: f64,
    pub processing_delay: f64,
    /// Additional processing time while the car-following stack loads the
    /// compute module.
    pub extra_load_delay: f64,
    pub range: f64,
    pub distance_noise_std: f64,
    pub dropout_prob: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fps: 5.0,
            processing_delay: 0.050,
            extra_load_delay: 0.0,
            range: 60.0,
            distance_noise_std: 0.0,
            dropout_prob: 0.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ParamError::invalid("camera.fps", "must be > 0"));
        }
        for (name, v) in [
            ("camera.processing_delay", self.processing_delay),
            ("camera.extra_load_delay", self.extra_load_delay),
            ("camera.distance_noise_std", self.distance_noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ParamError::invalid(name, "must be >= 0"));
            }
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(ParamError::invalid("camera.range", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(ParamError::invalid("camera.dropout_prob", "must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn total_delay(&self) -> f64 {
        self.processing_delay + self.extra_load_delay
    }
}

/// Capture instant of `frame_id`: one division, never an accumulated sum.
pub fn next_capture_time(frame_id: u64, cfg: &CameraConfig, stream_start: f64) -> f64 {
    stream_start + frame_id as f64 / cfg.fps
}

/// Emulates one camera frame over the world snapshot.
///
/// Every actor ahead of the ego within range and inside the ±45° frustum is
/// reported with its bumper gap plus Gaussian noise. The dropout draw is
/// consumed on every frame so the random stream only depends on frame and
/// object counts. Returns `None` when the frame is dropped.
pub fn capture_frame<R: Rng + ?Sized>(
    world: &World,
    state: &WorldState,
    cfg: &CameraConfig,
    rng: &mut R,
    frame_id: u64,
    capture_time: f64,
) -> Option<Detection> {
    let dropped = rng.random::<f64>() < cfg.dropout_prob;
    let noise = (cfg.distance_noise_std > 0.0)
        .then(|| Normal::new(0.0, cfg.distance_noise_std).expect("std validated"));

    let ego = state.ego.pose;
    let (sin_h, cos_h) = ego.heading.sin_cos();
    let front = world.vehicle.front_extent();
    let cam_x = ego.x + front * cos_h;
    let cam_y = ego.y + front * sin_h;

    let mut objects = Vec::new();
    for actor in &state.actors {
        let class = match actor.kind {
            ActorKind::Pedestrian => ObjectClass::Person,
            ActorKind::LeadVehicle | ActorKind::EgoVehicle => ObjectClass::Vehicle,
        };
        let dx = actor.pose.x - cam_x;
        let dy = actor.pose.y - cam_y;
        let forward = dx * cos_h + dy * sin_h;
        let lateral = -dx * sin_h + dy * cos_h;
        if forward <= 0.0 || lateral.atan2(forward).abs() > FRUSTUM_HALF_ANGLE {
            continue;
        }
        let gap = world.bumper_gap(state, actor);
        if gap <= 0.0 || gap > cfg.range {
            continue;
        }
        let measured = match &noise {
            Some(n) => gap + n.sample(rng),
            None => gap,
        };
        objects.push(DetectedObject {
            class,
            distance: measured.max(MIN_REPORTED_DISTANCE),
            lateral_offset: lateral,
            confidence: (1.0 - 0.3 * gap / cfg.range).clamp(0.0, 1.0),
        });
    }
    if dropped {
        return None;
    }
    Some(Detection {
        frame_id,
        capture_time,
        delivery_time: capture_time + cfg.total_delay(),
        objects,
    })
}
