//! Calibration of stochastic simulation models as discrete simulation
//! optimization.
//!
//! The crate is organised around a pluggable [`objective::Oracle`]: any
//! simulator that maps a calibration-parameter vector and a seed to an outcome
//! vector. On top of it sit
//!
//! - [`objective`]: the target-distance objective and median aggregation over
//!   replicates,
//! - [`ruler`]: the discrete parameter lattice, its wrap-around neighborhood and
//!   the stochastic ruler random search,
//! - [`sst`]: monotonicity-based solution-space truncation,
//! - [`sim`]: an agent-based hepatitis C transmission model used as the main
//!   oracle,
//! - [`synthetic`]: monotone benchmark oracles with enumerable optima,
//! - [`harness`]: configuration, orchestration and result files.

pub mod harness;
pub mod objective;
pub mod ruler;
pub mod seed;
pub mod sim;
pub mod sst;
pub mod synthetic;

pub use objective::{AggregateResult, CalibrationTargets, Evaluator, Oracle, OracleError};
pub use ruler::{DiscreteSpace, MtSchedule, RulerParams, SearchSpace, SrTrace, StopReason};
pub use sim::{ModelParams, SimOutcome};
pub use sst::{SolutionMatrix, TruncationReport};
