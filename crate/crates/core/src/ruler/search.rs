use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lattice::{LatticeError, SearchSpace};
use super::schedule::MtSchedule;
use crate::objective::{AggregateResult, Evaluator, ObjectiveError};
use crate::seed::SeedPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RulerError {
    #[error("ruler bounds must satisfy a < b (a = {a}, b = {b})")]
    InvalidBounds { a: f64, b: f64 },
    #[error("threshold delta = {delta} must exceed the lower ruler bound a = {a}")]
    ThresholdBelowRuler { delta: f64, a: f64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("start point {0:?} is not on the lattice")]
    BadStart(Vec<usize>),
}

/// Stochastic ruler `U(a, b)`, stopping threshold and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulerParams {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub budget: u64,
    pub schedule: MtSchedule,
}

impl RulerParams {
    pub fn new(
        a: f64,
        b: f64,
        delta: f64,
        budget: u64,
        schedule: MtSchedule,
    ) -> Result<Self, RulerError> {
        let p = Self {
            a,
            b,
            delta,
            budget,
            schedule,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RulerError> {
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return Err(RulerError::InvalidBounds {
                a: self.a,
                b: self.b,
            });
        }
        // written negated so that NaN is rejected
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.delta > self.a) {
            return Err(RulerError::ThresholdBelowRuler {
                delta: self.delta,
                a: self.a,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Budget,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub h_hat: f64,
    pub y_hat: Vec<f64>,
    pub theta: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    pub current: Vec<usize>,
    pub candidate: Vec<usize>,
    pub candidate_x: Vec<f64>,
    pub m_t: u32,
    pub tests: Vec<TestRecord>,
    pub accepted: bool,
    pub threshold_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub t: u64,
    pub index: Vec<usize>,
    pub x: Vec<f64>,
    pub h_hat: f64,
    pub y_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrSummary {
    pub t_f: u64,
    pub stop_reason: StopReason,
    /// The point whose estimate met the threshold, or the final incumbent on
    /// a budget stop.
    pub solution: Vec<usize>,
    pub solution_x: Vec<f64>,
    /// Estimate attached to `solution`; `None` if the solution is the start
    /// point and it was never evaluated.
    pub solution_h_hat: Option<f64>,
    pub solution_y_hat: Option<Vec<f64>>,
    /// Lowest estimate seen over all evaluations.
    pub best_observed: Option<Observed>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrTrace {
    pub start: Vec<usize>,
    pub ruler: RulerParams,
    pub iterations: Vec<IterationRecord>,
    pub summary: SrSummary,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine<'a> {
    Iteration(&'a IterationRecord),
    Terminal(&'a SrSummary),
}

impl SrTrace {
    /// One JSON object per iteration followed by the terminal record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for it in &self.iterations {
            out.push_str(&serde_json::to_string(&TraceLine::Iteration(it)).expect("serializable"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&TraceLine::Terminal(&self.summary)).expect("serializable"));
        out.push('\n');
        out
    }

    /// Every evaluation in order, tagged with its iteration.
    pub fn observations(&self) -> impl Iterator<Item = Observed> + '_ {
        self.iterations.iter().flat_map(|it| {
            it.tests.iter().map(move |test| Observed {
                t: it.t,
                index: it.candidate.clone(),
                x: it.candidate_x.clone(),
                h_hat: test.h_hat,
                y_hat: test.y_hat.clone(),
            })
        })
    }

    /// First evaluation with `h_hat < delta`.
    pub fn first_below(&self, delta: f64) -> Option<Observed> {
        self.observations().find(|o| o.h_hat < delta)
    }
}

/// A failure part-way through a search, with everything recorded so far.
#[derive(Debug, Error)]
#[error("stochastic ruler aborted at iteration {}: {error}", .partial.iterations.len() + 1)]
pub struct SrFailure {
    pub error: RulerError,
    pub partial: Box<SrTrace>,
}

fn test_seed(seed: u64, t: u64, test: u32) -> u64 {
    SeedPath::new(seed)
        .label("sr")
        .index(t)
        .index(test as u64)
        .seed()
}

/// Stochastic ruler search from `start`.
///
/// Each iteration proposes a uniformly chosen candidate from the current
/// point's neighborhood and subjects it to `M_t` tests; each test draws a
/// fresh estimate `h` and a fresh ruler value `theta ~ U(a, b)` and fails when
/// `h > theta`. The candidate replaces the incumbent only if all tests pass.
/// The search stops after `budget` iterations, or as soon as any estimate
/// falls below `delta`.
pub fn run_sr(
    evaluator: &Evaluator<'_>,
    space: &SearchSpace,
    ruler: &RulerParams,
    start: &[usize],
    seed: u64,
) -> Result<SrTrace, SrFailure> {
    let lattice = space.lattice();
    let fail = |error: RulerError, partial: SrTrace| SrFailure {
        error,
        partial: Box::new(partial),
    };
    let mut trace = SrTrace {
        start: start.to_vec(),
        ruler: *ruler,
        iterations: Vec::new(),
        summary: SrSummary {
            t_f: 0,
            stop_reason: StopReason::Budget,
            solution: start.to_vec(),
            solution_x: Vec::new(),
            solution_h_hat: None,
            solution_y_hat: None,
            best_observed: None,
            evaluations: 0,
        },
    };
    if let Err(e) = ruler.validate() {
        return Err(fail(e, trace));
    }
    let start_x = match lattice.point(start) {
        Ok(x) => x,
        Err(_) => return Err(fail(RulerError::BadStart(start.to_vec()), trace)),
    };
    trace.summary.solution_x = start_x.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(SeedPath::new(seed).label("sr-proposals").seed());
    let mut incumbent = start.to_vec();
    let mut incumbent_x = start_x;
    let mut incumbent_eval: Option<AggregateResult> = None;
    let mut best: Option<Observed> = None;
    let mut evaluations = 0usize;

    let mut t = 1u64;
    while t <= ruler.budget {
        let candidates = match space.candidates(&incumbent) {
            Ok(c) => c,
            Err(e) => return Err(fail(e.into(), trace)),
        };
        let candidate = candidates[rng.random_range(0..candidates.len())].clone();
        let candidate_x = lattice.point(&candidate).expect("candidate on lattice");
        let m = ruler.schedule.tests_required(t);
        let mut record = IterationRecord {
            t,
            current: incumbent.clone(),
            candidate: candidate.clone(),
            candidate_x: candidate_x.clone(),
            m_t: m,
            tests: Vec::with_capacity(m as usize),
            accepted: false,
            threshold_met: false,
        };
        let mut last_eval = None;
        let mut all_passed = true;
        for test in 0..m {
            let agg = match evaluator.evaluate(&candidate_x, test_seed(seed, t, test)) {
                Ok(a) => a,
                Err(e) => {
                    trace.iterations.push(record);
                    return Err(fail(e.into(), trace));
                }
            };
            evaluations += 1;
            let theta = rng.random_range(ruler.a..ruler.b);
            let success = agg.h_hat <= theta;
            record.tests.push(TestRecord {
                h_hat: agg.h_hat,
                y_hat: agg.y_hat.clone(),
                theta,
                success,
            });
            if best.as_ref().is_none_or(|b| agg.h_hat < b.h_hat) {
                best = Some(Observed {
                    t,
                    index: candidate.clone(),
                    x: candidate_x.clone(),
                    h_hat: agg.h_hat,
                    y_hat: agg.y_hat.clone(),
                });
            }
            if agg.h_hat < ruler.delta {
                record.threshold_met = true;
                trace.iterations.push(record);
                trace.summary = SrSummary {
                    t_f: t,
                    stop_reason: StopReason::Threshold,
                    solution: candidate,
                    solution_x: candidate_x,
                    solution_h_hat: Some(agg.h_hat),
                    solution_y_hat: Some(agg.y_hat),
                    best_observed: best,
                    evaluations,
                };
                return Ok(trace);
            }
            last_eval = Some(agg);
            if !success {
                all_passed = false;
                break;
            }
        }
        if all_passed {
            record.accepted = true;
            incumbent = candidate;
            incumbent_x = candidate_x;
            incumbent_eval = last_eval;
        }
        trace.iterations.push(record);
        t += 1;
    }

    trace.summary = SrSummary {
        t_f: ruler.budget,
        stop_reason: StopReason::Budget,
        solution: incumbent,
        solution_x: incumbent_x,
        solution_h_hat: incumbent_eval.as_ref().map(|e| e.h_hat),
        solution_y_hat: incumbent_eval.map(|e| e.y_hat),
        best_observed: best,
        evaluations,
    };
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulerBoundsEstimate {
    pub ruler: RulerParams,
    pub lower: AggregateResult,
    pub upper: AggregateResult,
}

/// Upper ruler bound from the corners: `b = max(h(x_l), h(x_r))`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_ruler_bounds(
    evaluator: &Evaluator<'_>,
    space: &SearchSpace,
    x_l: &[usize],
    x_r: &[usize],
    a: f64,
    delta: f64,
    budget: u64,
    schedule: MtSchedule,
    seed: u64,
) -> Result<RulerBoundsEstimate, RulerError> {
    let lattice = space.lattice();
    let root = SeedPath::new(seed).label("ruler-bounds");
    let lower = evaluator.evaluate(&lattice.point(x_l)?, root.clone().label("lower").seed())?;
    let upper = evaluator.evaluate(&lattice.point(x_r)?, root.label("upper").seed())?;
    let b = lower.h_hat.max(upper.h_hat);
    let ruler = RulerParams::new(a, b, delta, budget, schedule)?;
    Ok(RulerBoundsEstimate {
        ruler,
        lower,
        upper,
    })
}
