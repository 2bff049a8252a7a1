use std::collections::{BTreeMap, HashSet};

use super::*;
use crate::objective::{CalibrationTargets, Evaluator, Oracle, OracleError};

/// Returns `value` as the single outcome everywhere; with target 1 the
/// objective is `|1 - value|`.
struct Flat(f64);

impl Oracle for Flat {
    fn outcome_dim(&self) -> usize {
        1
    }
    fn replicate(&self, _x: &[f64], _seed: u64) -> Result<Vec<f64>, OracleError> {
        Ok(vec![self.0])
    }
}

/// Objective equals the first coordinate.
struct FirstCoord;

impl Oracle for FirstCoord {
    fn outcome_dim(&self) -> usize {
        1
    }
    fn replicate(&self, x: &[f64], _seed: u64) -> Result<Vec<f64>, OracleError> {
        Ok(vec![1.0 + x[0]])
    }
}

/// Uniform noise around a smooth bowl, to exercise acceptance and rejection.
struct NoisyBowl;

impl Oracle for NoisyBowl {
    fn outcome_dim(&self) -> usize {
        1
    }
    fn replicate(&self, x: &[f64], seed: u64) -> Result<Vec<f64>, OracleError> {
        let noise = (seed % 1000) as f64 / 1000.0 * 0.4;
        let d: f64 = x.iter().map(|v| (v - 2.0).abs()).sum::<f64>() * 0.2;
        Ok(vec![1.0 + d + noise])
    }
}

struct FailsAfter(std::sync::atomic::AtomicUsize);

impl Oracle for FailsAfter {
    fn outcome_dim(&self) -> usize {
        1
    }
    fn replicate(&self, _x: &[f64], _seed: u64) -> Result<Vec<f64>, OracleError> {
        let n = self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        if n >= 3 {
            Err(OracleError::Failed("boom".into()))
        } else {
            Ok(vec![2.0])
        }
    }
}

fn unit_targets() -> CalibrationTargets {
    CalibrationTargets::new(vec![1.0]).unwrap()
}

fn grid(k: usize, m: usize) -> DiscreteSpace {
    DiscreteSpace::new(vec![(0..k).map(|i| i as f64).collect(); m]).unwrap()
}

#[test]
fn every_hcv_point_has_26_symmetric_neighbors() {
    let s = DiscreteSpace::hcv_default();
    for x in s.indices() {
        let n = s.neighbors(&x).unwrap();
        assert_eq!(n.len(), 26);
        let unique: HashSet<_> = n.iter().cloned().collect();
        assert_eq!(unique.len(), 26);
        assert!(!unique.contains(&x));
        for z in &n {
            assert!(s.neighbors(z).unwrap().contains(&x), "{z:?} does not see {x:?}");
        }
    }
}

#[test]
fn neighborhood_size_is_three_pow_m_minus_one() {
    for m in 1..=4 {
        let s = grid(4, m);
        for x in s.indices() {
            assert_eq!(s.neighbors(&x).unwrap().len(), 3usize.pow(m as u32) - 1);
        }
    }
}

#[test]
fn ruler_params_validation() {
    assert!(matches!(
        RulerParams::new(0.5, 0.5, 1.0, 10, MtSchedule::Text),
        Err(RulerError::InvalidBounds { .. })
    ));
    assert!(matches!(
        RulerParams::new(0.1, 1.0, 0.1, 10, MtSchedule::Text),
        Err(RulerError::ThresholdBelowRuler { .. })
    ));
    assert!(RulerParams::new(0.1, 1.446, f64::INFINITY, 10, MtSchedule::Text).is_ok());
}

#[test]
fn infinite_threshold_stops_on_first_evaluation() {
    let oracle = Flat(3.0);
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(grid(5, 2));
    let ruler = RulerParams::new(0.1, 1.0, f64::INFINITY, 50, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[0, 0], 1).unwrap();
    assert_eq!(trace.summary.t_f, 1);
    assert_eq!(trace.summary.stop_reason, StopReason::Threshold);
    assert_eq!(trace.summary.evaluations, 1);
    assert_eq!(trace.summary.solution, trace.iterations[0].candidate);
}

#[test]
fn dominated_objective_never_accepts() {
    // h = |1 - 2.0| = 1.0 = b
    let oracle = Flat(2.0);
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(grid(5, 3));
    let ruler = RulerParams::new(0.1, 1.0, 0.3, 60, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[1, 2, 3], 9).unwrap();
    assert_eq!(trace.summary.t_f, 60);
    assert_eq!(trace.summary.stop_reason, StopReason::Budget);
    assert_eq!(trace.summary.solution, vec![1, 2, 3]);
    assert!(trace.iterations.iter().all(|it| !it.accepted && it.tests.len() == 1));
    assert_eq!(trace.summary.solution_h_hat, None);
    assert_eq!(trace.summary.best_observed.as_ref().unwrap().h_hat, 1.0);
}

#[test]
fn zero_budget_returns_start() {
    let oracle = Flat(2.0);
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(grid(3, 2));
    let ruler = RulerParams::new(0.1, 1.0, 0.3, 0, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[2, 1], 0).unwrap();
    assert_eq!(trace.summary.t_f, 0);
    assert_eq!(trace.summary.stop_reason, StopReason::Budget);
    assert_eq!(trace.summary.solution, vec![2, 1]);
    assert!(trace.iterations.is_empty());
    assert_eq!(e.calls(), 0);
}

#[test]
fn acceptance_bookkeeping() {
    let oracle = NoisyBowl;
    let e = Evaluator::new(&oracle, unit_targets(), 3).unwrap();
    let space = SearchSpace::full(grid(5, 3));
    let ruler = RulerParams::new(0.1, 1.5, 0.11, 300, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[0, 0, 0], 4).unwrap();
    let mut incumbent = trace.start.clone();
    let mut accepted = 0;
    let mut rejected = 0;
    for (i, it) in trace.iterations.iter().enumerate() {
        assert_eq!(it.t, i as u64 + 1);
        assert_eq!(it.current, incumbent);
        assert_eq!(it.m_t, ruler.schedule.tests_required(it.t));
        assert!(space.lattice().neighbors(&it.current).unwrap().contains(&it.candidate));
        for test in &it.tests {
            assert!(test.theta >= ruler.a && test.theta < ruler.b);
            assert_eq!(test.success, test.h_hat <= test.theta);
        }
        if it.accepted {
            accepted += 1;
            assert_eq!(it.tests.len(), it.m_t as usize);
            assert!(it.tests.iter().all(|t| t.success));
            incumbent = it.candidate.clone();
        } else if !it.threshold_met {
            rejected += 1;
            assert!(!it.tests.last().unwrap().success);
            assert!(it.tests[..it.tests.len() - 1].iter().all(|t| t.success));
        }
    }
    assert!(accepted > 0 && rejected > 0, "{accepted} {rejected}");
    let evaluations: usize = trace.iterations.iter().map(|it| it.tests.len()).sum();
    assert_eq!(evaluations, trace.summary.evaluations);
    assert_eq!(evaluations, e.calls());
}

#[test]
fn replay_is_bit_exact() {
    let oracle = NoisyBowl;
    let space = SearchSpace::full(grid(5, 3));
    let ruler = RulerParams::new(0.1, 1.5, 0.11, 100, MtSchedule::Commented).unwrap();
    let run = |seed| {
        let e = Evaluator::new(&oracle, unit_targets(), 3).unwrap();
        run_sr(&e, &space, &ruler, &[0, 0, 0], seed).unwrap().to_json_lines()
    };
    assert_eq!(run(17), run(17));
    assert_ne!(run(17), run(18));
}

#[test]
fn proposals_are_uniform() {
    let oracle = Flat(2.0);
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(DiscreteSpace::hcv_default());
    let draws = 100_000u64;
    let ruler = RulerParams::new(0.1, 1.0, 0.3, draws, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[4, 2, 2], 123).unwrap();
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for it in &trace.iterations {
        *counts.entry(it.candidate.clone()).or_default() += 1;
    }
    assert_eq!(counts.len(), 26);
    let expected = draws as f64 / 26.0;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // chi-square 0.99 quantile with 25 degrees of freedom
    assert!(chi2 < 44.314, "chi2 = {chi2}");
}

#[test]
fn oracle_failure_returns_partial_trace() {
    let oracle = FailsAfter(Default::default());
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(grid(4, 2));
    let ruler = RulerParams::new(0.1, 1.0, 0.3, 20, MtSchedule::Text).unwrap();
    let err = run_sr(&e, &space, &ruler, &[0, 0], 2).unwrap_err();
    assert!(matches!(err.error, RulerError::Objective(_)));
    assert_eq!(err.partial.iterations.len(), 4);
    assert!(err.partial.iterations[3].tests.is_empty());
}

#[test]
fn bad_start_rejected() {
    let oracle = Flat(2.0);
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(grid(4, 2));
    let ruler = RulerParams::new(0.1, 1.0, 0.3, 20, MtSchedule::Text).unwrap();
    let err = run_sr(&e, &space, &ruler, &[7, 0], 2).unwrap_err();
    assert!(matches!(err.error, RulerError::BadStart(_)));
}

#[test]
fn restricted_search_stays_inside() {
    let oracle = FirstCoord;
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let lattice = grid(5, 2);
    let rows: Vec<Vec<usize>> = lattice.indices().filter(|p| p[0] >= 2).collect();
    let space = SearchSpace::restricted(lattice, &rows).unwrap();
    let ruler = RulerParams::new(0.5, 5.0, 0.6, 200, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[2, 0], 5).unwrap();
    assert!(trace.iterations.iter().all(|it| it.candidate[0] >= 2));
}

#[test]
fn ruler_bound_is_max_of_corner_estimates() {
    let oracle = FirstCoord;
    let e = Evaluator::new(&oracle, unit_targets(), 3).unwrap();
    let space = SearchSpace::full(grid(5, 2));
    // h(x) = x[0]: 0 at the lower corner, 4 at the upper corner
    let est = estimate_ruler_bounds(&e, &space, &[0, 0], &[4, 4], 0.1, 0.3, 40, MtSchedule::Text, 1)
        .unwrap();
    assert_eq!(est.ruler.b, 4.0);
    assert_eq!(est.lower.h_hat, 0.0);
    let flat = Flat(1.05);
    let e = Evaluator::new(&flat, unit_targets(), 3).unwrap();
    let err = estimate_ruler_bounds(&e, &space, &[0, 0], &[4, 4], 0.1, 0.3, 40, MtSchedule::Text, 1)
        .unwrap_err();
    assert!(matches!(err, RulerError::InvalidBounds { .. }));
}

#[test]
fn first_below_scans_all_evaluations() {
    let oracle = NoisyBowl;
    let e = Evaluator::new(&oracle, unit_targets(), 1).unwrap();
    let space = SearchSpace::full(grid(5, 3));
    let ruler = RulerParams::new(0.1, 1.5, 0.11, 100, MtSchedule::Text).unwrap();
    let trace = run_sr(&e, &space, &ruler, &[0, 0, 0], 3).unwrap();
    let min = trace.summary.best_observed.as_ref().unwrap().h_hat;
    let hit = trace.first_below(min + 1e-12).unwrap();
    assert!(hit.h_hat <= min + 1e-12);
    assert!(trace.first_below(min).is_none());
}
