//! Batches of independent work: many scenario runs, and the single-bit-flip
//! sweep over E2E frames.
//!
//! With the `parallel` feature (default) the batch is spread over a rayon
//! pool; the `*_sequential` variants are always available and give the same
//! results in the same order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{
    decode_and_check, encode_frame, Channel, ChannelState, ControlCommand, E2EFrame, GatewayConfig,
    TurnSignal, Verdict,
};
use crate::harness::{run_stage, HarnessError, RunLog, ScenarioConfig, StageConfig};

fn map_items<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

fn run_one(sc: &ScenarioConfig, stage: &StageConfig) -> Result<RunLog, HarnessError> {
    run_stage(sc, stage).map(|o| o.log)
}

/// Runs every scenario on `stage`; results come back in input order.
pub fn run_batch(scenarios: &[ScenarioConfig], stage: &StageConfig) -> Vec<Result<RunLog, HarnessError>> {
    map_items(scenarios, |sc| run_one(sc, stage))
}

pub fn run_batch_sequential(
    scenarios: &[ScenarioConfig],
    stage: &StageConfig,
) -> Vec<Result<RunLog, HarnessError>> {
    scenarios.iter().map(|sc| run_one(sc, stage)).collect()
}

/// `n` valid control frames with random content on random channels and
/// counters.
pub fn random_control_frames(seed: u64, n: usize) -> Vec<E2EFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let cmd = ControlCommand {
                throttle: rng.random_range(0.0..=1.0),
                brake: rng.random_range(0.0..=1.0),
                steer: rng.random_range(-0.5..=0.5),
                turn_signal: [TurnSignal::Off, TurnSignal::Left, TurnSignal::Right, TurnSignal::Hazard]
                    [rng.random_range(0..4)],
                issued_at: rng.random_range(0.0..1000.0),
                seq: rng.random(),
            };
            let channel = if rng.random_bool(0.5) { Channel::Primary } else { Channel::Secondary };
            encode_frame(channel.data_id(), rng.random(), &cmd.to_payload()).expect("command fits a frame")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitFlipSummary {
    pub frames: usize,
    pub flips: usize,
    pub detected: usize,
}

impl BitFlipSummary {
    pub fn all_detected(&self) -> bool {
        self.detected == self.flips
    }

    fn add(self, o: Self) -> Self {
        Self {
            frames: self.frames + o.frames,
            flips: self.flips + o.flips,
            detected: self.detected + o.detected,
        }
    }
}

/// Would a receiver expecting `original` (in sequence, on time) reject
/// `bytes`? Undecodable bytes, a wrong data id and any non-Ok verdict count.
pub fn receiver_rejects(original: &E2EFrame, bytes: &[u8]) -> bool {
    let Ok(frame) = E2EFrame::from_bytes(bytes) else {
        return true;
    };
    if frame.data_id != original.data_id {
        return true;
    }
    let cfg = GatewayConfig::default();
    let channel = if original.data_id == Channel::Primary.data_id() {
        Channel::Primary
    } else {
        Channel::Secondary
    };
    let state = ChannelState {
        last_counter: Some(original.counter.wrapping_sub(1)),
        ..ChannelState::new(channel, 0.0)
    };
    decode_and_check(&frame, &state, 0.02, &cfg).0 != Verdict::Ok
}

fn flip_one(frame: &E2EFrame) -> BitFlipSummary {
    let bytes = frame.to_bytes();
    let flips = bytes.len() * 8;
    let detected = (0..flips)
        .filter(|&bit| {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            receiver_rejects(frame, &b)
        })
        .count();
    BitFlipSummary {
        frames: 1,
        flips,
        detected,
    }
}

/// Flips every bit of every frame, one at a time.
pub fn bit_flip_sweep(frames: &[E2EFrame]) -> BitFlipSummary {
    map_items(frames, flip_one).into_iter().fold(BitFlipSummary::default(), BitFlipSummary::add)
}

pub fn bit_flip_sweep_sequential(frames: &[E2EFrame]) -> BitFlipSummary {
    frames.iter().map(flip_one).fold(BitFlipSummary::default(), BitFlipSummary::add)
}
