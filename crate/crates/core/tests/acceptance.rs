//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulercal::harness::{paired_sst_comparison, PairedSettings};
use rulercal::objective::objective_h;
use rulercal::ruler::{run_sr, DiscreteSpace, MtSchedule, RulerParams, SearchSpace, StopReason};
use rulercal::seed::SeedPath;
use rulercal::sim::rates::solve_influence_probs;
use rulercal::sim::{run_replication, ModelParams, SimOutcome, SimulationState};
use rulercal::sst::{truncate, Decision, Pass};
use rulercal::synthetic::{brute_force_optimum, interior_target_problem, MonotoneTestProblem};
use rulercal::{CalibrationTargets, Evaluator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// One-sided sign test of "second is larger": ties are dropped and the
/// p-value is `P(Bin(n, 1/2) >= wins)`.
fn sign_test(pairs: &[(f64, f64)]) -> (usize, usize, f64) {
    let wins = pairs.iter().filter(|(a, b)| b > a).count();
    let n = pairs.iter().filter(|(a, b)| b != a).count();
    let mut p = 0.0;
    for k in wins..=n {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        p += c * 0.5f64.powi(n as i32);
    }
    (wins, n, p)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn objective_arithmetic() -> Outcome {
    let t = CalibrationTargets::new(vec![3.6, 2.6, 0.1]).unwrap();
    let h2 = objective_h(&[2.98, 2.42, 0.112], &t).unwrap();
    let h3 = objective_h(&[2.74, 2.23, 0.094], &t).unwrap();
    let pass = (0.356..=0.366).contains(&h2) && (0.44..=0.45).contains(&h3);
    outcome(pass, format!("h = {h2:.6} (want [0.356, 0.366]), h = {h3:.6} (want [0.44, 0.45])"))
}

fn values(space: &DiscreteSpace, axis: usize, idx: [usize; 3]) -> BTreeSet<u64> {
    idx.iter().map(|&j| space.axis(axis)[j].to_bits()).collect()
}

fn set(v: &[f64]) -> BTreeSet<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn lattice_and_neighborhood() -> Outcome {
    let s = DiscreteSpace::hcv_default();
    let mut problems = Vec::new();
    if s.size() != 225 {
        problems.push(format!("size {}", s.size()));
    }
    let mut all_26 = true;
    for idx in s.indices() {
        let nb = s.neighbors(&idx).unwrap();
        let distinct: BTreeSet<_> = nb.iter().cloned().collect();
        if nb.len() != 26 || distinct.len() != 26 || distinct.contains(&idx) {
            all_26 = false;
        }
        for z in &nb {
            if !s.neighbors(z).unwrap().contains(&idx) {
                problems.push(format!("asymmetric {idx:?} -> {z:?}"));
            }
        }
    }
    if !all_26 {
        problems.push("a point without 26 distinct neighbors".into());
    }
    let examples = [
        (2, vec![0.03525, 0.0355, 0.03575]),
        (0, vec![0.037, 0.035, 0.03525]),
        (8, vec![0.03675, 0.037, 0.035]),
    ];
    for (j, want) in &examples {
        if values(&s, 0, s.axis_neighbors(0, *j).unwrap()) != set(want) {
            problems.push(format!("N(x1^{}) mismatch", j + 1));
        }
    }
    let centre = s.index_of(&[0.0355, 0.3, 2.0e-5]).unwrap();
    let nb = s.neighbors(&centre).unwrap();
    let per_axis = [
        set(&[0.03525, 0.0355, 0.03575]),
        set(&[0.25, 0.3, 0.35]),
        set(&[1.9e-5, 2.0e-5, 2.1e-5]),
    ];
    let inside = nb.iter().all(|z| {
        let x = s.point(z).unwrap();
        (0..3).all(|i| per_axis[i].contains(&x[i].to_bits()))
    });
    if nb.len() != 26 || !inside {
        problems.push("product neighborhood example".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "|S| = 225, 26 symmetric neighbors everywhere, three axis examples and the product example match".into()
        } else {
            problems.join("; ")
        },
    )
}

fn corner_bound(problem: &MonotoneTestProblem) -> f64 {
    let s = &problem.space;
    let l = problem.true_objective(&s.lower_corner()).unwrap();
    let r = problem.true_objective(&s.upper_corner()).unwrap();
    l.max(r)
}

fn sr_correctness() -> Outcome {
    let problem = interior_target_problem(0.0).unwrap();
    let (_, h_star) = brute_force_optimum(&problem).unwrap();
    let delta = 0.05 * 3.0;
    let ruler = RulerParams::new(0.0, corner_bound(&problem), delta, 500, MtSchedule::Text).unwrap();
    let eval = Evaluator::new(&problem, problem.targets.clone(), 1).unwrap();
    let space = SearchSpace::full(problem.space.clone());
    let runs = 50;
    let mut threshold = 0;
    let mut within = 0;
    for i in 0..runs {
        let seed = SeedPath::new(2024).label("sr-correctness").index(i).seed();
        let trace = run_sr(&eval, &space, &ruler, &problem.space.lower_corner(), seed).unwrap();
        if trace.summary.stop_reason == StopReason::Threshold {
            threshold += 1;
            let h = problem.true_objective(&trace.summary.solution).unwrap();
            if h - h_star <= delta && h < delta {
                within += 1;
            }
        }
    }
    let pass = threshold * 100 >= 95 * runs as usize && within == threshold;
    outcome(
        pass,
        format!("{threshold}/{runs} threshold stops within T = 500 (need 95%); {within}/{threshold} true h within delta = {delta}"),
    )
}

fn in_cone(pass: Pass, row: &[usize], apex: &[usize]) -> bool {
    match pass {
        Pass::First => row.iter().zip(apex).all(|(r, a)| r <= a),
        Pass::Second => row.iter().zip(apex).all(|(r, a)| r >= a),
    }
}

fn sst_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let problems = 150;
    let mut lost_optimum = 0;
    let mut outside_cone = 0;
    let mut eliminated_total = 0;
    for i in 0..problems {
        let p = MonotoneTestProblem::random_strictly_monotone(&mut rng, 3, 3, 6).unwrap();
        let eval = Evaluator::new(&p, p.targets.clone(), 1).unwrap();
        let report = truncate(&p.space, &eval, i as u64).unwrap();
        if !report.surviving_space.contains(&p.true_optimum.0) {
            lost_optimum += 1;
        }
        let apexes: Vec<_> = report
            .evaluated_points
            .iter()
            .filter(|e| matches!(e.decision, Decision::Eliminated { .. }))
            .collect();
        for row in p.space.indices() {
            if report.surviving_space.contains(&row) {
                continue;
            }
            eliminated_total += 1;
            if !apexes.iter().any(|e| in_cone(e.pass, &row, &e.index)) {
                outside_cone += 1;
            }
        }
    }
    outcome(
        lost_optimum == 0 && outside_cone == 0,
        format!(
            "{problems} problems up to 6x6x6, {eliminated_total} rows eliminated; optimum lost {lost_optimum} times; {outside_cone} rows outside every cone"
        ),
    )
}

fn sst_efficiency() -> Outcome {
    let problem = interior_target_problem(0.02).unwrap();
    let settings = PairedSettings {
        a: 0.0,
        b: corner_bound(&problem),
        deltas: vec![0.45, 0.375, 0.3],
        budget: 500,
        schedule: MtSchedule::Text,
        replicates: 5,
        sst_replicates: 5,
    };
    let seeds: Vec<u64> = (0..50).collect();
    let pairs = paired_sst_comparison(&problem, &settings, &seeds).unwrap();
    let no_slower = pairs.iter().filter(|p| p.sst_no_slower()).count();
    let limit = 2 * problem.space.min_cardinality();
    let max_calls = pairs.iter().map(|p| p.truncation_calls).max().unwrap();
    outcome(
        no_slower * 100 >= 70 * pairs.len() && max_calls <= limit,
        format!(
            "truncated search no slower in {no_slower}/{} pairs at deltas {:?} (need 70%); truncation used at most {max_calls} evaluations (limit {limit})",
            pairs.len(),
            settings.deltas
        ),
    )
}

fn abm_monotonicity() -> Outcome {
    let base = ModelParams::default();
    let x_l = [0.035, 0.2, 1.9e-5];
    let x_r = [0.037, 0.4, 2.3e-5];
    let x3_only = [x_l[0], x_l[1], x_r[2]];
    let seeds: Vec<u64> = (0..20).map(|i| SeedPath::new(5).label("abm-monotone").index(i).seed()).collect();
    let run = |x: &[f64; 3]| -> Vec<SimOutcome> {
        let p = base.with_calibration(x).unwrap();
        seeds.iter().map(|&s| run_replication(&p, s, p.horizon_days).unwrap()).collect()
    };
    let low = run(&x_l);
    let high = run(&x_r);
    let mid = run(&x3_only);
    let pairs = |a: &[SimOutcome], b: &[SimOutcome], f: fn(&SimOutcome) -> f64| -> Vec<(f64, f64)> {
        a.iter().zip(b).map(|(u, v)| (f(u), f(v))).collect()
    };
    let tests = [
        ("y1 xl->xr", sign_test(&pairs(&low, &high, |y| y.y1))),
        ("y2 xl->xr", sign_test(&pairs(&low, &high, |y| y.y2))),
        ("y3 xl->xr", sign_test(&pairs(&low, &high, |y| y.y3))),
        ("y3 in x3", sign_test(&pairs(&low, &mid, |y| y.y3))),
    ];
    let med = |v: &[SimOutcome], f: fn(&SimOutcome) -> f64| median(v[..5].iter().map(f).collect());
    let fs: [fn(&SimOutcome) -> f64; 3] = [|y| y.y1, |y| y.y2, |y| y.y3];
    let m_l: Vec<f64> = fs.iter().map(|f| med(&low, *f)).collect();
    let m_r: Vec<f64> = fs.iter().map(|f| med(&high, *f)).collect();
    let m_3 = med(&mid, |y| y.y3);
    let ordered = m_l.iter().zip(&m_r).all(|(a, b)| a <= b) && m_l[2] <= m_3;
    let signs_ok = tests.iter().all(|(_, (_, _, p))| *p < 0.05);
    let detail = tests
        .iter()
        .map(|(name, (w, n, p))| format!("{name} {w}/{n} p={p:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        ordered && signs_ok,
        format!(
            "20 paired seeds: {detail}; medians of 5 at xl {m_l:.3?} <= xr {m_r:.3?}, y3 {:.3} <= {m_3:.3}",
            m_l[2]
        ),
    )
}

fn abm_invariants() -> Outcome {
    let p = ModelParams::default();
    let mut state = SimulationState::initialize(&p, 31).unwrap();
    let mut violation = state.check_invariants().err();
    for _ in 0..p.horizon_days {
        if violation.is_some() {
            break;
        }
        state.step_day();
        let c = state.counts();
        if c.rna_positive > c.antibody_positive() {
            violation = Some(format!("day {}: RNA above antibody", state.day));
        } else {
            violation = state
                .check_invariants()
                .err()
                .map(|e| format!("day {}: {e}", state.day));
        }
    }
    let trace = |seed| {
        let (_, t) = rulercal::sim::run_traced(&p, seed, p.horizon_days).unwrap();
        serde_json::to_vec(&t).unwrap()
    };
    let (a, b) = (trace(8), trace(8));
    let identical = a == b;
    outcome(
        violation.is_none() && identical,
        format!(
            "{} days x {} agents: {}; repeated trace {} ({} bytes)",
            p.horizon_days,
            p.population_size,
            violation.as_deref().unwrap_or("no invariant violated"),
            if identical { "byte-identical" } else { "differs" },
            a.len()
        ),
    )
}

fn influence_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let gen = rng.random_range(0.01..0.99);
        let idu = rng.random_range(0.01..=1.0);
        let p_inf = rng.random_range(1e-7..0.5);
        let Ok((e, ue)) = solve_influence_probs(p_inf, idu, gen) else {
            continue;
        };
        let back = ue * gen + e * (1.0 - gen);
        worst = worst.max(((back - p_inf) / p_inf).abs());
        checked += 1;
    }
    outcome(worst <= 1e-12, format!("1000 feasible triples, worst relative error {worst:.2e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("objective arithmetic", objective_arithmetic),
        ("lattice and neighborhood", lattice_and_neighborhood),
        ("search correctness on synthetic oracles", sr_correctness),
        ("truncation soundness", sst_soundness),
        ("truncation efficiency", sst_efficiency),
        ("model monotonicity", abm_monotonicity),
        ("model structural invariants", abm_invariants),
        ("influence probability algebra", influence_algebra),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
