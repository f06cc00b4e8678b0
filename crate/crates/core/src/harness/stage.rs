use serde::{Deserialize, Serialize};

use crate::gateway::{DATA_ID_CONTROL_PRIMARY, DATA_ID_CONTROL_SECONDARY};
use crate::sensors::TIME_EPS;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageKind {
    /// Everything in one process on virtual time.
    Internal,
    /// The central car server runs as a TCP peer.
    External,
    /// Central car server and gateway both run as TCP peers.
    Vil,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Internal => "internal",
            StageKind::External => "external",
            StageKind::Vil => "vil",
        }
    }
}

/// Channel failures injected at the gateway ingress.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    pub kill_primary_at: Option<f64>,
    pub kill_secondary_at: Option<f64>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.kill_primary_at.is_none() && self.kill_secondary_at.is_none()
    }

    /// Whether a frame with `data_id` arriving at `now` is lost.
    pub fn drops(&self, data_id: u16, now: f64) -> bool {
        let killed = |at: Option<f64>| at.is_some_and(|t| now >= t - TIME_EPS);
        match data_id {
            DATA_ID_CONTROL_PRIMARY => killed(self.kill_primary_at),
            DATA_ID_CONTROL_SECONDARY => killed(self.kill_secondary_at),
            _ => false,
        }
    }
}

/// Where to reach externally started peers. Missing entries are spawned
/// in-process on a loopback port.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub cecas: Option<String>,
    pub gateway: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: StageKind,
    #[serde(default)]
    pub endpoints: Endpoints,
    pub lockstep: bool,
    /// Fixed delay added to every message on every hop, seconds.
    pub transport_delay: f64,
    #[serde(default)]
    pub faults: FaultPlan,
}

impl StageConfig {
    pub fn new(stage: StageKind) -> Self {
        Self {
            stage,
            endpoints: Endpoints::default(),
            lockstep: true,
            transport_delay: 0.0,
            faults: FaultPlan::default(),
        }
    }

    pub fn internal() -> Self {
        Self::new(StageKind::Internal)
    }

    pub fn external() -> Self {
        Self::new(StageKind::External)
    }

    pub fn vil() -> Self {
        Self::new(StageKind::Vil)
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.transport_delay.is_finite() && self.transport_delay >= 0.0) {
            return Err(HarnessError::Config("transport delay must be >= 0".into()));
        }
        if self.stage != StageKind::Vil && !self.faults.is_empty() {
            return Err(HarnessError::Config(
                "channel kills need the gateway in the loop (--stage vil)".into(),
            ));
        }
        if self.stage == StageKind::Internal && !self.lockstep {
            return Err(HarnessError::Config(
                "the internal stage always runs in lockstep on virtual time".into(),
            ));
        }
        for t in [self.faults.kill_primary_at, self.faults.kill_secondary_at]
            .into_iter()
            .flatten()
        {
            if !(t.is_finite() && t >= 0.0) {
                return Err(HarnessError::Config("kill time must be >= 0".into()));
            }
        }
        Ok(())
    }
}
