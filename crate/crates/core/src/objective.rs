//! Target-distance objective, median aggregation over replicates, and the
//! oracle interface consumed by the optimizers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::replicate_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("simulation failed: {0}")]
    Failed(String),
    #[error("oracle expects {expected} parameters, got {got}")]
    BadInput { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("outcome has {got} components, targets have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target component {index} is {value}; targets must be strictly positive")]
    NonPositiveTarget { index: usize, value: f64 },
    #[error("at least one replicate is required")]
    NoReplicates,
    #[error("replicate {index}: {source}")]
    Replicate { index: usize, source: OracleError },
}

/// A stochastic simulator: one call is one independent replication.
pub trait Oracle: Sync {
    /// Number of outcome components returned by [`Oracle::replicate`].
    fn outcome_dim(&self) -> usize;

    fn replicate(&self, x: &[f64], seed: u64) -> Result<Vec<f64>, OracleError>;
}

impl<T: Oracle + ?Sized> Oracle for &T {
    fn outcome_dim(&self) -> usize {
        (**self).outcome_dim()
    }

    fn replicate(&self, x: &[f64], seed: u64) -> Result<Vec<f64>, OracleError> {
        (**self).replicate(x, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CalibrationTargets {
    values: Vec<f64>,
}

impl CalibrationTargets {
    pub fn new(values: Vec<f64>) -> Result<Self, ObjectiveError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(ObjectiveError::NonPositiveTarget { index, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<Vec<f64>> for CalibrationTargets {
    type Error = ObjectiveError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<CalibrationTargets> for Vec<f64> {
    fn from(t: CalibrationTargets) -> Self {
        t.values
    }
}

/// Sum over components of `|1 - y_i / y0_i|`.
pub fn objective_h(y: &[f64], targets: &CalibrationTargets) -> Result<f64, ObjectiveError> {
    if y.len() != targets.len() {
        return Err(ObjectiveError::DimensionMismatch {
            expected: targets.len(),
            got: y.len(),
        });
    }
    Ok(y.iter()
        .zip(targets.values())
        .map(|(yi, ti)| (1.0 - yi / ti).abs())
        .sum())
}

/// Average per-outcome fractional deviation implied by an objective value.
pub fn fractional_deviation(h_hat: f64, n: usize) -> f64 {
    assert!(n > 0, "outcome count must be positive");
    h_hat / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub y: Vec<f64>,
    pub h: f64,
}

/// Median-of-k objective value and the outcome vector of the replicate that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub h_hat: f64,
    pub y_hat: Vec<f64>,
    pub replicates: Vec<Replicate>,
    pub k: usize,
    /// Position of the median replicate inside `replicates`.
    pub median_index: usize,
}

/// Select the (lower) median replicate by objective value.
///
/// Ties on `h` are broken by replicate order so the choice does not depend on
/// sort stability.
pub fn aggregate_outcomes(
    outcomes: Vec<Vec<f64>>,
    targets: &CalibrationTargets,
) -> Result<AggregateResult, ObjectiveError> {
    if outcomes.is_empty() {
        return Err(ObjectiveError::NoReplicates);
    }
    let replicates = outcomes
        .into_iter()
        .map(|y| objective_h(&y, targets).map(|h| Replicate { y, h }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..replicates.len()).collect();
    order.sort_by(|&i, &j| {
        replicates[i]
            .h
            .total_cmp(&replicates[j].h)
            .then(i.cmp(&j))
    });
    let k = replicates.len();
    let median_index = order[(k - 1) / 2];
    Ok(AggregateResult {
        h_hat: replicates[median_index].h,
        y_hat: replicates[median_index].y.clone(),
        replicates,
        k,
        median_index,
    })
}

/// Run `k` replications of `oracle` at `x` and aggregate them.
///
/// Replicate `i` uses the seed derived from `(seed, i)`. With a pool the
/// replications run concurrently; results are always collected in replicate
/// order.
pub fn aggregate(
    oracle: &dyn Oracle,
    x: &[f64],
    targets: &CalibrationTargets,
    k: usize,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<AggregateResult, ObjectiveError> {
    if k == 0 {
        return Err(ObjectiveError::NoReplicates);
    }
    let run = |i: usize| {
        oracle
            .replicate(x, replicate_seed(seed, i))
            .map_err(|source| ObjectiveError::Replicate { index: i, source })
    };
    let outcomes: Vec<Vec<f64>> = match pool {
        Some(pool) if k > 1 => {
            pool.install(|| (0..k).into_par_iter().map(run).collect::<Result<_, _>>())?
        }
        _ => (0..k).map(run).collect::<Result<_, _>>()?,
    };
    aggregate_outcomes(outcomes, targets)
}

/// `g(x)`: the oracle, targets and replicate count bundled together, with a
/// counter of how many aggregate evaluations were requested.
pub struct Evaluator<'a> {
    oracle: &'a dyn Oracle,
    targets: CalibrationTargets,
    replicates: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
    calls: AtomicUsize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        oracle: &'a dyn Oracle,
        targets: CalibrationTargets,
        replicates: usize,
    ) -> Result<Self, ObjectiveError> {
        if replicates == 0 {
            return Err(ObjectiveError::NoReplicates);
        }
        if oracle.outcome_dim() != targets.len() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: targets.len(),
                got: oracle.outcome_dim(),
            });
        }
        Ok(Self {
            oracle,
            targets,
            replicates,
            pool: None,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_pool(mut self, pool: Arc<rayon::ThreadPool>) -> Self {
        self.pool = Some(pool);
        self
    }

    /// Same oracle and targets with a different replicate count. The call
    /// counter starts from zero.
    pub fn with_replicates(&self, replicates: usize) -> Result<Evaluator<'a>, ObjectiveError> {
        let mut e = Evaluator::new(self.oracle, self.targets.clone(), replicates)?;
        e.pool = self.pool.clone();
        Ok(e)
    }

    pub fn evaluate(&self, x: &[f64], seed: u64) -> Result<AggregateResult, ObjectiveError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        aggregate(
            self.oracle,
            x,
            &self.targets,
            self.replicates,
            seed,
            self.pool.as_deref(),
        )
    }

    pub fn targets(&self) -> &CalibrationTargets {
        &self.targets
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}
