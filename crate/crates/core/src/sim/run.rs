use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::state::{Counts, DayEvents, SimulationState};
use super::{ModelError, ModelParams, SimOutcome};
use crate::objective::{Oracle, OracleError};

/// State summary at the end of one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    pub counts: Counts,
    pub events: DayEvents,
}

fn outcome(state: &SimulationState) -> Result<SimOutcome, ModelError> {
    let c = state.counts();
    if c.population == 0 {
        return Err(ModelError::Extinct { day: state.day });
    }
    Ok(SimOutcome::from_counts(&c))
}

/// Initialise a population and simulate `horizon_days` days. With a zero
/// horizon the initial seeding prevalences are returned.
pub fn run_replication(
    params: &ModelParams,
    seed: u64,
    horizon_days: u32,
) -> Result<SimOutcome, ModelError> {
    let mut state = SimulationState::initialize(params, seed)?;
    for _ in 0..horizon_days {
        state.step_day();
    }
    outcome(&state)
}

/// Like [`run_replication`] but also returns one record per day, starting with
/// the initial state as day 0.
pub fn run_traced(
    params: &ModelParams,
    seed: u64,
    horizon_days: u32,
) -> Result<(SimOutcome, Vec<DayRecord>), ModelError> {
    let mut state = SimulationState::initialize(params, seed)?;
    let mut trace = Vec::with_capacity(horizon_days as usize + 1);
    trace.push(DayRecord {
        day: 0,
        counts: state.counts(),
        events: DayEvents::default(),
    });
    for _ in 0..horizon_days {
        state.step_day();
        trace.push(DayRecord {
            day: state.day,
            counts: state.counts(),
            events: state.last_events,
        });
    }
    Ok((outcome(&state)?, trace))
}

/// One replication's result as written to CSV or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub seed: u64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub population_size: usize,
    pub horizon_days: u32,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub runtime_ms: u128,
}

impl ReplicationRecord {
    pub fn run(params: &ModelParams, seed: u64) -> Result<Self, ModelError> {
        let start = Instant::now();
        let y = run_replication(params, seed, params.horizon_days)?;
        Ok(Self {
            seed,
            x1: params.x1,
            x2: params.x2,
            x3: params.x3,
            population_size: params.population_size,
            horizon_days: params.horizon_days,
            y1: y.y1,
            y2: y.y2,
            y3: y.y3,
            runtime_ms: start.elapsed().as_millis(),
        })
    }
}

/// The transmission model as a calibration oracle over `(x1, x2, x3)`.
#[derive(Debug, Clone)]
pub struct AbmOracle {
    pub base: ModelParams,
}

impl AbmOracle {
    pub fn new(base: ModelParams) -> Result<Self, ModelError> {
        base.validate()?;
        Ok(Self { base })
    }
}

impl Oracle for AbmOracle {
    fn outcome_dim(&self) -> usize {
        3
    }

    fn replicate(&self, x: &[f64], seed: u64) -> Result<Vec<f64>, OracleError> {
        if x.len() != 3 {
            return Err(OracleError::BadInput {
                expected: 3,
                got: x.len(),
            });
        }
        let params = self
            .base
            .with_calibration(x)
            .map_err(|e| OracleError::Failed(e.to_string()))?;
        run_replication(&params, seed, params.horizon_days)
            .map(|y| y.to_vec())
            .map_err(|e| OracleError::Failed(e.to_string()))
    }
}
