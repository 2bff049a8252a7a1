use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::run::{write_file, HarnessError};
use crate::objective::Evaluator;
use crate::ruler::{run_sr, MtSchedule, RulerParams, SearchSpace, SrTrace};
use crate::seed::SeedPath;
use crate::sim::{ModelParams, ReplicationRecord};
use crate::sst::truncate;
use crate::synthetic::MonotoneTestProblem;

/// Settings shared by both arms of a paired comparison.
#[derive(Debug, Clone)]
pub struct PairedSettings {
    pub a: f64,
    pub b: f64,
    pub deltas: Vec<f64>,
    pub budget: u64,
    pub schedule: MtSchedule,
    pub replicates: usize,
    pub sst_replicates: usize,
}

/// Outcome of one seed: plain search against search after truncation.
#[derive(Debug, Clone, Serialize)]
pub struct PairOutcome {
    pub seed: u64,
    /// First iteration meeting each threshold; `None` when never met.
    pub plain_hits: Vec<Option<u64>>,
    pub sst_hits: Vec<Option<u64>>,
    pub plain_t_f: u64,
    pub sst_t_f: u64,
    /// Objective evaluations spent on truncation.
    pub truncation_calls: usize,
    pub surviving: usize,
}

impl PairOutcome {
    /// Whether the truncated run met every threshold no later than the
    /// plain run did. A threshold the plain run never met counts as an
    /// infinite plain time.
    pub fn sst_no_slower(&self) -> bool {
        self.plain_hits
            .iter()
            .zip(&self.sst_hits)
            .all(|(p, s)| match (p, s) {
                (_, None) => p.is_none(),
                (None, Some(_)) => true,
                (Some(p), Some(s)) => s <= p,
            })
    }
}

fn hits(trace: &SrTrace, deltas: &[f64]) -> Vec<Option<u64>> {
    deltas
        .iter()
        .map(|d| trace.first_below(*d).map(|o| o.t))
        .collect()
}

/// Run plain search from the lower corner and truncation followed by search
/// from the new lower extreme, for every seed. Both arms of a pair share the
/// seed.
pub fn paired_sst_comparison(
    problem: &MonotoneTestProblem,
    settings: &PairedSettings,
    seeds: &[u64],
) -> Result<Vec<PairOutcome>, HarnessError> {
    let delta = settings.deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let ruler = RulerParams::new(settings.a, settings.b, delta, settings.budget, settings.schedule)
        .map_err(|error| HarnessError::Search { error, iterations: 0 })?;
    let space = &problem.space;
    seeds
        .par_iter()
        .map(|&seed| {
            let root = SeedPath::new(seed);
            let eval = Evaluator::new(problem, problem.targets.clone(), settings.replicates)?;
            let sst_eval = eval.with_replicates(settings.sst_replicates)?;
            let search_err = |f: crate::ruler::SrFailure| HarnessError::Search {
                error: f.error,
                iterations: f.partial.iterations.len(),
            };
            let plain = run_sr(
                &eval,
                &SearchSpace::full(space.clone()),
                &ruler,
                &space.lower_corner(),
                root.clone().label("search").seed(),
            )
            .map_err(search_err)?;
            let report = truncate(space, &sst_eval, root.clone().label("sst").seed())
                .map_err(|f| HarnessError::Truncation(f.error))?;
            let restricted = report.surviving_space.to_search_space(space)?;
            let after = run_sr(&eval, &restricted, &ruler, &report.new_x_l, root.label("search").seed())
                .map_err(search_err)?;
            Ok(PairOutcome {
                seed,
                plain_hits: hits(&plain, &settings.deltas),
                sst_hits: hits(&after, &settings.deltas),
                plain_t_f: plain.summary.t_f,
                sst_t_f: after.summary.t_f,
                truncation_calls: report.oracle_calls,
                surviving: report.surviving_count(),
            })
        })
        .collect()
}

/// ABM replications at one parameter setting, one record per seed.
pub fn simulate_many(params: &ModelParams, seeds: &[u64]) -> Result<Vec<ReplicationRecord>, HarnessError> {
    seeds
        .par_iter()
        .map(|&s| ReplicationRecord::run(params, s).map_err(HarnessError::from))
        .collect()
}

/// Write replication records as `replications.csv` and `replications.json`.
pub fn write_replications(dir: &Path, records: &[ReplicationRecord]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    write_file(&dir.join("replications.csv"), bytes)?;
    write_file(
        &dir.join("replications.json"),
        serde_json::to_string_pretty(records).expect("records serialise"),
    )
}
