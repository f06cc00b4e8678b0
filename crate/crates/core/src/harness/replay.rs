//! Re-runs a recorded internal-stage scenario and compares every row.

use serde::{Deserialize, Serialize};

use super::runlog::{RunLog, TickRow, CSV_HEADER};
use super::scenario::ScenarioConfig;
use super::stage::{StageConfig, StageKind};
use super::{run_scenario, HarnessError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub tick: u64,
    /// Row index in the log.
    pub row: usize,
    pub column: String,
    pub recorded: String,
    pub replayed: String,
}

/// Compares rows field by field in their CSV rendering.
pub fn first_divergence(recorded: &[TickRow], replayed: &[TickRow]) -> Option<Divergence> {
    for (i, (a, b)) in recorded.iter().zip(replayed).enumerate() {
        let (fa, fb) = (a.fields(), b.fields());
        if let Some(c) = (0..fa.len()).find(|&c| fa[c] != fb[c]) {
            return Some(Divergence {
                tick: a.tick,
                row: i,
                column: CSV_HEADER[c].to_string(),
                recorded: fa[c].clone(),
                replayed: fb[c].clone(),
            });
        }
    }
    if recorded.len() != replayed.len() {
        let i = recorded.len().min(replayed.len());
        let tick = recorded
            .get(i)
            .or_else(|| replayed.get(i))
            .map(|r| r.tick)
            .unwrap_or(i as u64);
        return Some(Divergence {
            tick,
            row: i,
            column: "row count".into(),
            recorded: recorded.len().to_string(),
            replayed: replayed.len().to_string(),
        });
    }
    None
}

/// Replays `log` under `scenario` on the internal stage.
pub fn replay_with(log: &RunLog, scenario: &ScenarioConfig) -> Result<(), HarnessError> {
    if log.meta.stage != StageKind::Internal {
        return Err(HarnessError::Config(format!(
            "only internal-stage logs can be replayed, this one is {}",
            log.meta.stage.as_str()
        )));
    }
    let fresh = match run_scenario(scenario, &StageConfig::internal()) {
        Ok(l) => l,
        Err(HarnessError::ScenarioDiverged { log, .. }) => *log,
        Err(e) => return Err(e),
    };
    match first_divergence(&log.rows, &fresh.rows) {
        None => Ok(()),
        Some(d) => Err(HarnessError::DivergenceFound(Box::new(d))),
    }
}

/// Replays a log under the scenario recorded in it.
pub fn replay(log: &RunLog) -> Result<(), HarnessError> {
    replay_with(log, &log.meta.scenario)
}
