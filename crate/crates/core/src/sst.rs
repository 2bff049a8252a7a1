//! Solution-space truncation.
//!
//! Two walks along the lattice diagonal, one up from the all-minimum corner
//! and one down from the all-maximum corner. Under a non-decreasing map from
//! parameters to outcomes, an outcome that lies strictly below the targets in
//! every component rules out every point dominated by the evaluated point, and
//! an outcome strictly above rules out every point that dominates it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{CalibrationTargets, Evaluator, ObjectiveError};
use crate::ruler::{DiscreteSpace, LatticeError, SearchSpace};
use crate::seed::SeedPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SstError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("truncation eliminated every point; the targets lie outside the outcome range reachable on the lattice")]
    EmptySurvivingSpace,
}

fn check_dims(u: &[usize], x: &[usize]) -> Result<(), SstError> {
    if u.len() != x.len() {
        return Err(SstError::DimensionMismatch(u.len(), x.len()));
    }
    Ok(())
}

/// `u <= x` in every component.
pub fn dominates_leq(u: &[usize], x: &[usize]) -> Result<bool, SstError> {
    check_dims(u, x)?;
    Ok(u.iter().zip(x).all(|(a, b)| a <= b))
}

/// `u >= x` in every component.
pub fn dominates_geq(u: &[usize], x: &[usize]) -> Result<bool, SstError> {
    check_dims(u, x)?;
    Ok(u.iter().zip(x).all(|(a, b)| a >= b))
}

fn strictly_below(y: &[f64], targets: &CalibrationTargets) -> bool {
    y.iter().zip(targets.values()).all(|(a, b)| a < b)
}

fn strictly_above(y: &[f64], targets: &CalibrationTargets) -> bool {
    y.iter().zip(targets.values()).all(|(a, b)| a > b)
}

/// Surviving lattice points, stored as index vectors in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionMatrix {
    rows: Vec<Vec<usize>>,
}

impl SolutionMatrix {
    pub fn full(space: &DiscreteSpace) -> Self {
        Self {
            rows: space.indices().collect(),
        }
    }

    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        rows.sort();
        rows.dedup();
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        self.rows
            .binary_search_by(|r| r.as_slice().cmp(index))
            .is_ok()
    }

    /// Drops every row matching `pred`; returns how many were dropped.
    fn remove_where(&mut self, pred: impl Fn(&[usize]) -> bool) -> usize {
        let before = self.rows.len();
        self.rows.retain(|r| !pred(r));
        before - self.rows.len()
    }

    /// Rows as parameter values, one CSV line per row, with an `x1..xm` header.
    pub fn to_csv(&self, space: &DiscreteSpace) -> Result<String, LatticeError> {
        let mut out = (1..=space.dim())
            .map(|i| format!("x{i}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for row in &self.rows {
            let x = space.point(row)?;
            out.push_str(
                &x.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_search_space(&self, space: &DiscreteSpace) -> Result<SearchSpace, LatticeError> {
        SearchSpace::restricted(space.clone(), &self.rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    /// Outcome strictly on one side of the targets; `removed` rows deleted.
    Eliminated { removed: usize },
    Break,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pass: Pass,
    /// Diagonal step, starting at 1.
    pub step: usize,
    pub index: Vec<usize>,
    pub x: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub h_hat: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub matrix: SolutionMatrix,
    pub boundary: Vec<usize>,
    pub evaluations: Vec<Evaluation>,
    pub eliminated: usize,
}

#[derive(Debug, Error)]
#[error("truncation pass failed after {} evaluations: {error}", .partial.evaluations.len())]
pub struct PassFailure {
    pub error: SstError,
    pub partial: Box<PassOutcome>,
}

fn diagonal_pass(
    pass: Pass,
    mut matrix: SolutionMatrix,
    space: &DiscreteSpace,
    evaluator: &Evaluator<'_>,
    seed: u64,
) -> Result<PassOutcome, PassFailure> {
    let targets = evaluator.targets().clone();
    let corner = match pass {
        Pass::First => space.lower_corner(),
        Pass::Second => space.upper_corner(),
    };
    let diagonal = |d: usize| -> Vec<usize> {
        match pass {
            Pass::First => corner.iter().map(|&c| c + d).collect(),
            Pass::Second => corner.iter().map(|&c| c - d).collect(),
        }
    };
    let mut out = PassOutcome {
        matrix: SolutionMatrix { rows: Vec::new() },
        boundary: corner.clone(),
        evaluations: Vec::new(),
        eliminated: 0,
    };
    let label = match pass {
        Pass::First => "sst-first",
        Pass::Second => "sst-second",
    };
    for d in 0..space.min_cardinality() {
        let index = diagonal(d);
        let x = space.point(&index).expect("diagonal stays on lattice");
        let step_seed = SeedPath::new(seed).label(label).index(d as u64).seed();
        let agg = match evaluator.evaluate(&x, step_seed) {
            Ok(a) => a,
            Err(e) => {
                out.matrix = matrix;
                return Err(PassFailure {
                    error: e.into(),
                    partial: Box::new(out),
                });
            }
        };
        let sub_target = match pass {
            Pass::First => strictly_below(&agg.y_hat, &targets),
            Pass::Second => strictly_above(&agg.y_hat, &targets),
        };
        let decision = if sub_target {
            let removed = match pass {
                Pass::First => matrix.remove_where(|r| r.iter().zip(&index).all(|(a, b)| a <= b)),
                Pass::Second => matrix.remove_where(|r| r.iter().zip(&index).all(|(a, b)| a >= b)),
            };
            out.eliminated += removed;
            out.boundary = index.clone();
            Decision::Eliminated { removed }
        } else {
            Decision::Break
        };
        out.evaluations.push(Evaluation {
            pass,
            step: d + 1,
            index,
            x,
            y_hat: agg.y_hat,
            h_hat: agg.h_hat,
            decision,
        });
        if decision == Decision::Break {
            break;
        }
    }
    out.matrix = matrix;
    Ok(out)
}

/// Upward walk from the all-minimum corner, deleting `{r : r <= x^t}` while
/// the estimate at `x^t` is strictly below the targets. The returned boundary
/// is the last diagonal point that triggered an elimination, or the corner if
/// none did.
pub fn first_pass(
    matrix: SolutionMatrix,
    space: &DiscreteSpace,
    evaluator: &Evaluator<'_>,
    seed: u64,
) -> Result<PassOutcome, PassFailure> {
    diagonal_pass(Pass::First, matrix, space, evaluator, seed)
}

/// Downward walk from the all-maximum corner, deleting `{r : r >= x^t}` while
/// the estimate at `x^t` is strictly above the targets.
pub fn second_pass(
    matrix: SolutionMatrix,
    space: &DiscreteSpace,
    evaluator: &Evaluator<'_>,
    seed: u64,
) -> Result<PassOutcome, PassFailure> {
    diagonal_pass(Pass::Second, matrix, space, evaluator, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub evaluated_points: Vec<Evaluation>,
    pub eliminated_count_pass1: usize,
    pub eliminated_count_pass2: usize,
    pub new_x_l: Vec<usize>,
    pub new_x_r: Vec<usize>,
    pub new_x_l_values: Vec<f64>,
    pub new_x_r_values: Vec<f64>,
    pub original_size: usize,
    pub surviving_space: SolutionMatrix,
    pub oracle_calls: usize,
}

impl TruncationReport {
    pub fn surviving_count(&self) -> usize {
        self.surviving_space.row_count()
    }
}

#[derive(Debug, Error)]
#[error("{error}")]
pub struct TruncateFailure {
    pub error: SstError,
    /// Whatever was recorded before the failure.
    pub partial: Option<Box<TruncationReport>>,
}

/// Both passes over the full lattice.
pub fn truncate(
    space: &DiscreteSpace,
    evaluator: &Evaluator<'_>,
    seed: u64,
) -> Result<TruncationReport, TruncateFailure> {
    truncate_from(SolutionMatrix::full(space), space, evaluator, seed)
}

/// Both passes starting from an already reduced matrix.
pub fn truncate_from(
    matrix: SolutionMatrix,
    space: &DiscreteSpace,
    evaluator: &Evaluator<'_>,
    seed: u64,
) -> Result<TruncationReport, TruncateFailure> {
    let original_size = matrix.row_count();
    let calls_before = evaluator.calls();
    let report = |evals: Vec<Evaluation>, m: SolutionMatrix, l: Vec<usize>, r: Vec<usize>, e1, e2| {
        TruncationReport {
            evaluated_points: evals,
            eliminated_count_pass1: e1,
            eliminated_count_pass2: e2,
            new_x_l_values: space.point(&l).expect("boundary on lattice"),
            new_x_r_values: space.point(&r).expect("boundary on lattice"),
            new_x_l: l,
            new_x_r: r,
            original_size,
            surviving_space: m,
            oracle_calls: evaluator.calls() - calls_before,
        }
    };
    let first = first_pass(matrix, space, evaluator, seed).map_err(|f| {
        let p = *f.partial;
        TruncateFailure {
            error: f.error,
            partial: Some(Box::new(report(
                p.evaluations,
                p.matrix,
                p.boundary,
                space.upper_corner(),
                p.eliminated,
                0,
            ))),
        }
    })?;
    let second = second_pass(first.matrix.clone(), space, evaluator, seed).map_err(|f| {
        let p = *f.partial;
        let mut evals = first.evaluations.clone();
        evals.extend(p.evaluations);
        TruncateFailure {
            error: f.error,
            partial: Some(Box::new(report(
                evals,
                p.matrix,
                first.boundary.clone(),
                p.boundary,
                first.eliminated,
                p.eliminated,
            ))),
        }
    })?;
    let mut evals = first.evaluations;
    evals.extend(second.evaluations);
    let out = report(
        evals,
        second.matrix,
        first.boundary,
        second.boundary,
        first.eliminated,
        second.eliminated,
    );
    if out.surviving_space.is_empty() {
        return Err(TruncateFailure {
            error: SstError::EmptySurvivingSpace,
            partial: Some(Box::new(out)),
        });
    }
    Ok(out)
}
