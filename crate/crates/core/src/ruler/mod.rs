//! Discrete parameter lattice and the stochastic ruler random search.

mod lattice;
mod schedule;
mod search;

pub use lattice::{DiscreteSpace, LatticeError, SearchSpace};
pub use schedule::{m_t, MtSchedule};
pub use search::{
    estimate_ruler_bounds, run_sr, IterationRecord, Observed, RulerBoundsEstimate, RulerError,
    RulerParams, SrFailure, SrSummary, SrTrace, StopReason, TestRecord,
};

#[cfg(test)]
mod tests;
