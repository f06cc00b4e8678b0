use std::collections::VecDeque;

use super::camera::Detection;

pub const DEFAULT_HISTORY: usize = 32;
/// Slack used when comparing stamps that come from different float paths
/// (`n / fps` against `k * tick_period`).
pub const TIME_EPS: f64 = 1e-9;

/// Delivered detections, newest last. The controller reads whichever frame
/// has the latest delivery time not after the current cycle, so a result is
/// held constant between updates.
#[derive(Debug, Clone)]
pub struct PerceptionMailbox {
    history: VecDeque<Detection>,
    capacity: usize,
}

impl Default for PerceptionMailbox {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_HISTORY)
    }
}

impl PerceptionMailbox {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            history: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn deliver(&mut self, detection: Detection) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(detection);
    }

    pub fn history(&self) -> impl Iterator<Item = &Detection> {
        self.history.iter()
    }

    /// Most recent delivery regardless of time.
    pub fn latest(&self) -> Option<&Detection> {
        self.history
            .iter()
            .max_by(|a, b| order(a, b))
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }
}

fn order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    a.delivery_time
        .total_cmp(&b.delivery_time)
        .then(a.frame_id.cmp(&b.frame_id))
}

/// The detection with the greatest delivery time not after `now`.
pub fn select_perception(mailbox: &PerceptionMailbox, now: f64) -> Option<&Detection> {
    mailbox
        .history
        .iter()
        .filter(|d| d.delivery_time <= now + TIME_EPS)
        .max_by(|a, b| order(a, b))
}

/// Frames captured but not yet delivered, ordered by delivery time.
#[derive(Debug, Clone, Default)]
pub struct InFlight {
    queue: VecDeque<Detection>,
}

impl InFlight {
    pub fn push(&mut self, detection: Detection) {
        let pos = self
            .queue
            .iter()
            .rposition(|d| order(d, &detection).is_le())
            .map_or(0, |p| p + 1);
        self.queue.insert(pos, detection);
    }

    /// Removes and returns everything deliverable by `now`.
    pub fn release(&mut self, now: f64) -> Vec<Detection> {
        let mut out = Vec::new();
        while self
            .queue
            .front()
            .is_some_and(|d| d.delivery_time <= now + TIME_EPS)
        {
            out.extend(self.queue.pop_front());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(frame_id: u64, delivery: f64) -> Detection {
        Detection {
            frame_id,
            capture_time: delivery - 0.05,
            delivery_time: delivery,
            objects: vec![],
        }
    }

    #[test]
    fn hold_rule() {
        let mut mb = PerceptionMailbox::default();
        mb.deliver(det(0, 0.05));
        mb.deliver(det(1, 0.25));
        assert_eq!(select_perception(&mb, 0.20).unwrap().frame_id, 0);
        assert_eq!(select_perception(&mb, 0.04), None);
        assert_eq!(select_perception(&mb, 0.25).unwrap().frame_id, 1);
    }

    #[test]
    fn ring_is_bounded() {
        let mut mb = PerceptionMailbox::with_capacity(4);
        for i in 0..10 {
            mb.deliver(det(i, i as f64));
        }
        assert_eq!(mb.history().count(), 4);
        assert_eq!(mb.latest().unwrap().frame_id, 9);
    }

    /// Counts how many consecutive control cycles each frame is held for.
    fn hold_counts(capture_period: f64, delay: f64, control_period: f64, cycles: u64) -> Vec<u32> {
        let mut mb = PerceptionMailbox::default();
        let mut inflight = InFlight::default();
        let mut next_frame = 0u64;
        let mut counts: Vec<u32> = Vec::new();
        for k in 0..cycles {
            let now = k as f64 * control_period;
            while (next_frame as f64) * capture_period <= now + TIME_EPS {
                let c = next_frame as f64 * capture_period;
                inflight.push(Detection {
                    frame_id: next_frame,
                    capture_time: c,
                    delivery_time: c + delay,
                    objects: vec![],
                });
                next_frame += 1;
            }
            for d in inflight.release(now) {
                mb.deliver(d);
            }
            if let Some(d) = select_perception(&mb, now) {
                let id = d.frame_id as usize;
                if counts.len() <= id {
                    counts.resize(id + 1, 0);
                }
                counts[id] += 1;
            }
        }
        counts
    }

    #[test]
    fn each_frame_held_for_ten_cycles() {
        let counts = hold_counts(0.2, 0.05, 0.02, 2000);
        // skip the first and last frame (edges of the timeline)
        let steady = &counts[1..counts.len() - 1];
        assert!(!steady.is_empty());
        assert!(steady.iter().all(|&c| c == 10), "{steady:?}");
    }

    #[test]
    fn faster_camera_than_control_skips_frames() {
        // 100 fps camera against a 50 Hz control loop: every other frame seen
        let counts = hold_counts(0.01, 0.0, 0.02, 500);
        let seen = counts.iter().filter(|&&c| c > 0).count();
        assert!(counts[2..counts.len() - 2].iter().all(|&c| c <= 1));
        assert_eq!(seen, 500, "one distinct frame per cycle");
    }

    proptest! {
        #[test]
        fn selection_is_monotone(
            deliveries in prop::collection::vec(0.0f64..10.0, 1..40),
            steps in prop::collection::vec(0.0f64..0.5, 1..60),
        ) {
            let mut mb = PerceptionMailbox::with_capacity(64);
            let mut sorted = deliveries.clone();
            sorted.sort_by(f64::total_cmp);
            for (i, t) in sorted.iter().enumerate() {
                mb.deliver(det(i as u64, *t));
            }
            let mut now = 0.0;
            let mut last: Option<u64> = None;
            for s in steps {
                now += s;
                let id = select_perception(&mb, now).map(|d| d.frame_id);
                if let (Some(prev), Some(cur)) = (last, id) {
                    prop_assert!(cur >= prev);
                }
                if last.is_some() {
                    prop_assert!(id.is_some());
                }
                last = id.or(last);
            }
        }

        #[test]
        fn inflight_releases_in_delivery_order(times in prop::collection::vec(0.0f64..5.0, 0..50)) {
            let mut q = InFlight::default();
            for (i, t) in times.iter().enumerate() {
                q.push(det(i as u64, *t));
            }
            let out = q.release(10.0);
            prop_assert_eq!(out.len(), times.len());
            prop_assert!(out.windows(2).all(|w| w[0].delivery_time <= w[1].delivery_time));
        }
    }
}
