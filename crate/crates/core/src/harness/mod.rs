//! Configuration, orchestration and result files.

mod bench;
mod config;
mod run;

pub use bench::{paired_sst_comparison, simulate_many, write_replications, PairOutcome, PairedSettings};
pub use config::{
    validate_config, ConfigError, LatticeSection, OracleKind, RulerSection, RunConfig, SstSection,
    StartPoint, SyntheticSection, Violation, ENV_OUT, ENV_SEED,
};
pub use run::{
    result_rows, rows_to_csv, run_calibration, run_calibration_with, run_truncation,
    write_truncation, BuiltOracle, CalibrationOutcome, HarnessError, ResultRow, Setup,
};

/// Process exit code for a search that met its threshold.
pub const EXIT_THRESHOLD: i32 = 0;
/// Process exit code for a search that exhausted its budget.
pub const EXIT_BUDGET: i32 = 2;
/// Process exit code for an invalid configuration.
pub const EXIT_CONFIG: i32 = 3;
