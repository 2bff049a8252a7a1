//! Agent-based model of hepatitis C transmission through medical procedures,
//! injecting drug use, higher-education contact and sexual partnerships.

mod params;
pub mod rates;
mod run;
mod state;
mod step;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use params::{default_districts, District, ModelParams, YEAR_DAYS};
pub use run::{run_replication, run_traced, AbmOracle, DayRecord, ReplicationRecord};
pub use state::{
    Agent, Counts, DailyRates, DayEvents, Group, HcvState, IduState, MedicalEnvironment,
    Professional, SimulationState, EDUCATION_MAX_AGE_DAYS, EDUCATION_MIN_AGE_DAYS,
    IDU_MAX_AGE_DAYS, IDU_MAX_DURATION_DAYS, IDU_MIN_AGE_DAYS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("procedure weights sum to zero")]
    UndefinedWeights,
    #[error("unemployed influence probability {p_ue} exceeds 1")]
    InfeasibleInfluence { p_ue: f64 },
    #[error("population is empty on day {day}")]
    Extinct { day: u32 },
}

/// Prevalences in percent of the living population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Antibody positive (ever infected).
    pub y1: f64,
    /// RNA positive (currently infected).
    pub y2: f64,
    /// Active injecting drug users.
    pub y3: f64,
}

impl SimOutcome {
    pub fn from_counts(c: &Counts) -> Self {
        let pct = |k: usize| 100.0 * k as f64 / c.population as f64;
        Self {
            y1: pct(c.antibody_positive()),
            y2: pct(c.rna_positive),
            y3: pct(c.active_idu),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.y1, self.y2, self.y3]
    }
}
