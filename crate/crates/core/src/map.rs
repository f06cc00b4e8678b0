//! Centerline maps: a 2D polyline with uniform lane width.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::MapError;
use crate::geometry::{project_onto_segment, Pose2D};

/// Minimum spacing between consecutive centerline points.
pub const MIN_POINT_SPACING: f64 = 0.01;

/// On-disk map document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub closed: bool,
    pub lane_width: f64,
    pub points: Vec<[f64; 2]>,
}

/// Ground-truth lane centerline.
///
/// Each stored pose carries the heading of the segment leaving it. For closed
/// paths the segment from the last point back to the first is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    points: Vec<Pose2D>,
    closed: bool,
    lane_width: f64,
    /// Arc length at the start of every segment, plus the total at the end.
    arc: Vec<f64>,
}

/// Closest point on the centerline to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    /// Arc length of the foot point, in [0, length).
    pub s: f64,
    /// Euclidean distance from the query to the foot point.
    pub distance: f64,
    pub segment: usize,
    /// Positive when the query lies left of the travel direction.
    pub signed_offset: f64,
}

impl WaypointPath {
    pub fn new(points: Vec<[f64; 2]>, closed: bool, lane_width: f64) -> Result<Self, MapError> {
        if !(lane_width.is_finite() && lane_width > 0.0) {
            return Err(MapError::Degenerate(format!(
                "lane_width must be positive, got {lane_width}"
            )));
        }
        if points.len() < 2 {
            return Err(MapError::Degenerate(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(MapError::Malformed(format!("point {i} is not finite")));
        }
        let n = points.len();
        let seg_count = if closed { n } else { n - 1 };
        let mut arc = Vec::with_capacity(seg_count + 1);
        let mut poses = Vec::with_capacity(n);
        let mut s = 0.0;
        for i in 0..n {
            let a = points[i];
            let b = if i + 1 < n {
                points[i + 1]
            } else if closed {
                points[0]
            } else {
                // last point of an open path reuses the final segment heading
                let h = poses.last().map(|p: &Pose2D| p.heading).unwrap_or(0.0);
                poses.push(Pose2D::new(a[0], a[1], h));
                break;
            };
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if len < MIN_POINT_SPACING {
                let j = if i + 1 < n { i + 1 } else { 0 };
                return Err(MapError::Degenerate(format!(
                    "points {i} and {j} are closer than {MIN_POINT_SPACING} m"
                )));
            }
            poses.push(Pose2D::new(a[0], a[1], (b[1] - a[1]).atan2(b[0] - a[0])));
            arc.push(s);
            s += len;
        }
        arc.push(s);
        Ok(Self {
            points: poses,
            closed,
            lane_width,
            arc,
        })
    }

    pub fn from_map_file(file: MapFile) -> Result<Self, MapError> {
        Self::new(file.points, file.closed, file.lane_width)
    }

    pub fn to_map_file(&self) -> MapFile {
        MapFile {
            closed: self.closed,
            lane_width: self.lane_width,
            points: self.points.iter().map(|p| [p.x, p.y]).collect(),
        }
    }

    pub fn points(&self) -> &[Pose2D] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    /// Total polyline length, including the closing segment of a loop.
    pub fn length(&self) -> f64 {
        *self.arc.last().expect("arc table is never empty")
    }

    pub fn segment_count(&self) -> usize {
        self.arc.len() - 1
    }

    pub fn segment(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        ([a.x, a.y], [b.x, b.y])
    }

    /// Maps an arc length onto the path's parameter domain: wrapped for loops,
    /// passed through for open roads.
    pub fn wrap_s(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.length())
        } else {
            s
        }
    }

    /// Signed arc-length difference `to - from`. On loops the shorter way round
    /// is taken, so a vehicle just behind another gets a small negative value.
    pub fn arc_delta(&self, from: f64, to: f64) -> f64 {
        let d = to - from;
        if self.closed {
            let len = self.length();
            let d = d.rem_euclid(len);
            if d > 0.5 * len {
                d - len
            } else {
                d
            }
        } else {
            d
        }
    }

    /// Pose on the centerline at arc length `s`. Open paths extrapolate along
    /// their first/last segment outside [0, length].
    pub fn pose_at(&self, s: f64) -> Pose2D {
        let s = self.wrap_s(s);
        let seg = self.segment_at(s);
        let (a, b) = self.segment(seg);
        let seg_len = self.arc[seg + 1] - self.arc[seg];
        let t = (s - self.arc[seg]) / seg_len;
        Pose2D::new(
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            self.points[seg].heading,
        )
    }

    fn segment_at(&self, s: f64) -> usize {
        let last = self.segment_count() - 1;
        if s <= 0.0 {
            return 0;
        }
        // first arc entry strictly greater than s, minus one
        let idx = self.arc.partition_point(|&a| a <= s);
        idx.saturating_sub(1).min(last)
    }

    /// Nearest point on the polyline (per-segment projection, clamped to
    /// segment endpoints). Ties resolve to the lowest segment index.
    pub fn project(&self, x: f64, y: f64) -> PathProjection {
        let mut best: Option<PathProjection> = None;
        for i in 0..self.segment_count() {
            let (a, b) = self.segment(i);
            let p = project_onto_segment(x, y, a, b);
            if best.is_none_or(|bp| p.distance < bp.distance) {
                let seg_len = self.arc[i + 1] - self.arc[i];
                let dx = b[0] - a[0];
                let dy = b[1] - a[1];
                let cross = dx * (y - a[1]) - dy * (x - a[0]);
                best = Some(PathProjection {
                    s: self.wrap_s(self.arc[i] + p.t * seg_len),
                    distance: p.distance,
                    segment: i,
                    signed_offset: p.distance.copysign(cross),
                });
            }
        }
        best.expect("path has at least one segment")
    }

    /// Shortest distance from `pose` to the centerline.
    pub fn lateral_error(&self, pose: &Pose2D) -> f64 {
        self.project(pose.x, pose.y).distance
    }
}

/// Parses a JSON map document and validates it.
pub fn load_map(source: &str) -> Result<WaypointPath, MapError> {
    let file: MapFile =
        serde_json::from_str(source).map_err(|e| MapError::Malformed(e.to_string()))?;
    WaypointPath::from_map_file(file)
}

pub const STRAIGHT_1KM: &str = "straight_1km";
pub const OVAL_588: &str = "oval_588";

pub fn bundled_map_names() -> &'static [&'static str] {
    &[STRAIGHT_1KM, OVAL_588]
}

/// Returns one of the maps shipped with the harness.
pub fn bundled_map(name: &str) -> Option<WaypointPath> {
    match name {
        STRAIGHT_1KM => Some(straight_road(1000.0, 10.0, 3.5)),
        OVAL_588 => Some(oval_track(200.0, 30.0, 1.0, 3.5)),
        _ => None,
    }
}

/// Open straight road along +x starting at the origin.
pub fn straight_road(length: f64, spacing: f64, lane_width: f64) -> WaypointPath {
    let n = (length / spacing).round() as usize;
    let points = (0..=n)
        .map(|i| [length * i as f64 / n as f64, 0.0])
        .collect();
    WaypointPath::new(points, false, lane_width).expect("straight road is valid")
}

/// Counter-clockwise stadium: two straights of `straight` meters joined by
/// semicircles of `radius`, sampled roughly every `spacing` meters. The first
/// point is the start of the lower straight at `(-straight/2, -radius)`.
pub fn oval_track(straight: f64, radius: f64, spacing: f64, lane_width: f64) -> WaypointPath {
    let half = 0.5 * straight;
    let n_straight = (straight / spacing).round() as usize;
    let n_arc = (PI * radius / spacing).ceil() as usize;
    let mut points = Vec::with_capacity(2 * (n_straight + n_arc));
    for i in 0..n_straight {
        points.push([-half + straight * i as f64 / n_straight as f64, -radius]);
    }
    for i in 0..n_arc {
        let a = -0.5 * PI + PI * i as f64 / n_arc as f64;
        points.push([half + radius * a.cos(), radius * a.sin()]);
    }
    for i in 0..n_straight {
        points.push([half - straight * i as f64 / n_straight as f64, radius]);
    }
    for i in 0..n_arc {
        let a = 0.5 * PI + PI * i as f64 / n_arc as f64;
        points.push([-half + radius * a.cos(), radius * a.sin()]);
    }
    WaypointPath::new(points, true, lane_width).expect("oval track is valid")
}
