//! Timing architecture: signal cadences, the free-running camera stream and
//! the perception mailbox read by every control cycle.

mod camera;
mod mailbox;
mod scheduler;

pub use camera::{
    capture_frame, next_capture_time, CameraConfig, DetectedObject, Detection, ObjectClass,
    FRUSTUM_HALF_ANGLE, MIN_REPORTED_DISTANCE,
};
pub use mailbox::{select_perception, InFlight, PerceptionMailbox, DEFAULT_HISTORY, TIME_EPS};
pub use scheduler::{tick_cadence, Cadence, DueSignals, SignalClass};
