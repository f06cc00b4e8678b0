//! Planar geometry shared by the world, the controllers and the metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    // in-range values pass through untouched so that mirrored inputs stay mirrored
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard the opposite edge from rounding.
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// A planar pose. `heading` is measured counter-clockwise from +x and is
/// kept normalized by every constructor and mutator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    pub fn set_heading(&mut self, heading: f64) {
        self.heading = normalize_angle(heading);
    }

    pub fn rotate_by(&mut self, delta: f64) {
        self.set_heading(self.heading + delta);
    }

    /// Moves `distance` along the current heading.
    pub fn advance(&mut self, distance: f64) {
        self.x += distance * self.heading.cos();
        self.y += distance * self.heading.sin();
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }
}

/// Result of projecting a point onto a single segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    /// Fraction along the segment in [0, 1].
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub distance: f64,
}

/// Orthogonal projection of `(px, py)` onto segment `a -> b`, clamped to the
/// segment endpoints.
pub fn project_onto_segment(px: f64, py: f64, a: [f64; 2], b: [f64; 2]) -> SegmentProjection {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        (((px - a[0]) * dx + (py - a[1]) * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let x = a[0] + t * dx;
    let y = a[1] + t * dy;
    SegmentProjection {
        t,
        x,
        y,
        distance: (px - x).hypot(py - y),
    }
}
