use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, OracleKind, RunConfig, StartPoint};
use crate::objective::{fractional_deviation, CalibrationTargets, Evaluator, ObjectiveError, Oracle};
use crate::ruler::{
    estimate_ruler_bounds, run_sr, DiscreteSpace, LatticeError, RulerError, RulerParams,
    SearchSpace, SrTrace, StopReason,
};
use crate::seed::SeedPath;
use crate::sim::{AbmOracle, ModelError};
use crate::sst::{truncate, SstError, TruncationReport};
use crate::synthetic::{make_problem, MonotoneTestProblem, ProblemSpec, SyntheticError, TargetSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("search failed after {iterations} iterations: {error}")]
    Search { error: RulerError, iterations: usize },
    #[error("truncation failed: {0}")]
    Truncation(SstError),
    #[error("start point {0:?} is not in the search space")]
    StartOutsideSpace(Vec<usize>),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row of the result table; one per configured threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub delta: f64,
    /// `delta / n`
    pub delta_avg: f64,
    pub h_hat: f64,
    /// `h_hat / n`
    pub delta_avg_obtained: f64,
    pub y_hat: Vec<f64>,
    pub x: Vec<f64>,
    /// Iteration at which this threshold was first met, or the final
    /// iteration if it never was.
    pub t_f: u64,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn csv_header(n: usize, m: usize) -> Vec<String> {
        let mut h: Vec<String> = ["delta", "delta_avg", "h_hat", "delta_avg_obtained"]
            .map(String::from)
            .to_vec();
        h.extend((1..=n).map(|i| format!("y{i}")));
        h.extend((1..=m).map(|j| format!("x{j}")));
        h.extend(["t_f", "stop_reason", "wall_time_s"].map(String::from));
        h
    }

    fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            self.delta.to_string(),
            self.delta_avg.to_string(),
            self.h_hat.to_string(),
            self.delta_avg_obtained.to_string(),
        ];
        r.extend(self.y_hat.iter().map(f64::to_string));
        r.extend(self.x.iter().map(f64::to_string));
        r.push(self.t_f.to_string());
        r.push(
            match self.stop_reason {
                StopReason::Threshold => "threshold",
                StopReason::Budget => "budget",
            }
            .into(),
        );
        r.push(format!("{:.3}", self.wall_time_s));
        r
    }
}

pub fn rows_to_csv(rows: &[ResultRow], n: usize, m: usize) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ResultRow::csv_header(n, m))?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// The oracle a configuration selects, owned.
#[allow(clippy::large_enum_variant)]
pub enum BuiltOracle {
    Abm(AbmOracle),
    Synthetic(Box<MonotoneTestProblem>),
}

impl BuiltOracle {
    pub fn as_oracle(&self) -> &dyn Oracle {
        match self {
            Self::Abm(o) => o,
            Self::Synthetic(p) => p.as_ref(),
        }
    }

    pub fn is_noisy(&self) -> bool {
        match self {
            Self::Abm(_) => true,
            Self::Synthetic(p) => p.noise_sd.iter().any(|s| *s > 0.0),
        }
    }
}

/// Everything needed to evaluate the objective for a validated configuration.
pub struct Setup {
    pub space: DiscreteSpace,
    pub targets: CalibrationTargets,
    pub oracle: BuiltOracle,
    pub pool: Arc<rayon::ThreadPool>,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let space = DiscreteSpace::new(cfg.lattice.axes.clone())?;
        let (oracle, targets) = match cfg.oracle {
            OracleKind::Abm => {
                let targets = CalibrationTargets::new(cfg.targets.clone().expect("validated"))?;
                (BuiltOracle::Abm(AbmOracle::new(cfg.model.clone())?), targets)
            }
            OracleKind::Synthetic => {
                let spec = ProblemSpec {
                    axes: space.clone(),
                    means: cfg.synthetic.means.clone(),
                    noise_sd: cfg.synthetic.noise_sd.clone(),
                    targets: match &cfg.synthetic.target_point {
                        Some(p) => TargetSpec::AtPoint(p.clone()),
                        None => TargetSpec::Values(cfg.targets.clone().expect("validated")),
                    },
                };
                let problem = make_problem(spec)?;
                let targets = problem.targets.clone();
                (BuiltOracle::Synthetic(Box::new(problem)), targets)
            }
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .expect("thread pool");
        Ok(Self {
            space,
            targets,
            oracle,
            pool: Arc::new(pool),
        })
    }

    pub fn evaluator(&self, replicates: usize) -> Result<Evaluator<'_>, HarnessError> {
        Ok(Evaluator::new(self.oracle.as_oracle(), self.targets.clone(), replicates)?
            .with_pool(self.pool.clone()))
    }
}

/// Run the truncation passes for a configuration, with the configured
/// truncation replicate count.
pub fn run_truncation(cfg: &RunConfig, setup: &Setup) -> Result<TruncationReport, HarnessError> {
    let k = cfg.sst.replicates.unwrap_or(cfg.replicates);
    if setup.oracle.is_noisy() {
        warn!(
            "oracle is noisy: truncation compares medians of {k} replicates, so eliminations are heuristic"
        );
    }
    let eval = setup.evaluator(k)?;
    let seed = SeedPath::new(cfg.master_seed).label("sst").seed();
    truncate(&setup.space, &eval, seed).map_err(|f| HarnessError::Truncation(f.error))
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationOutcome {
    pub rows: Vec<ResultRow>,
    pub trace: SrTrace,
    pub truncation: Option<TruncationReport>,
    pub ruler: RulerParams,
    pub start: Vec<usize>,
    pub oracle_calls: usize,
    pub wall_time_s: f64,
}

impl CalibrationOutcome {
    pub fn stop_reason(&self) -> StopReason {
        self.trace.summary.stop_reason
    }

    pub fn summary_text(&self) -> String {
        let s = &self.trace.summary;
        let mut out = format!(
            "stop: {:?} after t_f = {} iterations ({} objective evaluations)\nruler: U({}, {}), budget {}\nstart: {:?}\n",
            s.stop_reason, s.t_f, self.oracle_calls, self.ruler.a, self.ruler.b, self.ruler.budget, self.start
        );
        if let Some(t) = &self.truncation {
            out += &format!(
                "truncation: {} of {} points survive; new x_l {:?}, new x_r {:?}; {} evaluations\n",
                t.surviving_count(),
                t.original_size,
                t.new_x_l,
                t.new_x_r,
                t.oracle_calls
            );
        }
        out += &format!("solution: {:?} (h_hat {:?})\n", s.solution_x, s.solution_h_hat);
        if let Some(b) = &s.best_observed {
            out += &format!("best observed: {:?} h_hat {} at t = {}\n", b.x, b.h_hat, b.t);
        }
        for r in &self.rows {
            out += &format!(
                "delta {:<6} h_hat {:.6} t_f {:<4} {:?} x {:?} y {:?}\n",
                r.delta, r.h_hat, r.t_f, r.stop_reason, r.x, r.y_hat
            );
        }
        out
    }

    /// Write `results.csv`, `trace.jsonl`, `summary.txt` and, after
    /// truncation, `truncation.json` and `surviving.csv`.
    pub fn write_artifacts(&self, dir: &Path, space: &DiscreteSpace, n: usize) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_file(&dir.join("results.csv"), rows_to_csv(&self.rows, n, space.dim())?)?;
        write_file(&dir.join("trace.jsonl"), self.trace.to_json_lines())?;
        write_file(&dir.join("summary.txt"), self.summary_text())?;
        if let Some(t) = &self.truncation {
            write_truncation(dir, t, space)?;
        }
        Ok(())
    }
}

pub fn write_truncation(dir: &Path, report: &TruncationReport, space: &DiscreteSpace) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    write_file(&dir.join("truncation.json"), json)?;
    write_file(&dir.join("surviving.csv"), report.surviving_space.to_csv(space)?)
}

fn resolve_start(start: &StartPoint, low: &[usize], high: &[usize]) -> Vec<usize> {
    match start {
        StartPoint::Lower => low.to_vec(),
        StartPoint::Upper => high.to_vec(),
        StartPoint::Index(v) => v.clone(),
    }
}

/// Optional truncation, ruler bound estimation on the (new) extremes, then
/// the stochastic ruler search stopped at the smallest threshold. Each
/// threshold's row reports the first observation that met it.
pub fn run_calibration(cfg: &RunConfig) -> Result<CalibrationOutcome, HarnessError> {
    let setup = Setup::new(cfg)?;
    run_calibration_with(cfg, &setup)
}

pub fn run_calibration_with(cfg: &RunConfig, setup: &Setup) -> Result<CalibrationOutcome, HarnessError> {
    let started = Instant::now();
    let root = SeedPath::new(cfg.master_seed);
    let space = &setup.space;
    let n = setup.targets.len();

    let truncation = if cfg.sst.enabled {
        let report = run_truncation(cfg, setup)?;
        info!(
            "truncation kept {} of {} points",
            report.surviving_count(),
            report.original_size
        );
        Some(report)
    } else {
        None
    };
    let (search, low, high) = match &truncation {
        Some(t) => (
            t.surviving_space.to_search_space(space)?,
            t.new_x_l.clone(),
            t.new_x_r.clone(),
        ),
        None => (
            SearchSpace::full(space.clone()),
            space.lower_corner(),
            space.upper_corner(),
        ),
    };
    let start = resolve_start(&cfg.ruler.start, &low, &high);
    if space.linear_index(&start).is_err() {
        return Err(HarnessError::StartOutsideSpace(start));
    }

    let eval = setup.evaluator(cfg.replicates)?;
    let delta = cfg.min_delta();
    let ruler = match cfg.ruler.b {
        Some(b) => RulerParams::new(cfg.ruler.a, b, delta, cfg.ruler.budget, cfg.ruler.mt_form),
        None => estimate_ruler_bounds(
            &eval,
            &search,
            &low,
            &high,
            cfg.ruler.a,
            delta,
            cfg.ruler.budget,
            cfg.ruler.mt_form,
            root.clone().label("ruler-bounds").seed(),
        )
        .map(|e| {
            info!("estimated b = {} from h_hat {} and {}", e.ruler.b, e.lower.h_hat, e.upper.h_hat);
            e.ruler
        }),
    }
    .map_err(|error| HarnessError::Search { error, iterations: 0 })?;

    let trace = run_sr(&eval, &search, &ruler, &start, root.label("search").seed()).map_err(|f| {
        HarnessError::Search {
            error: f.error,
            iterations: f.partial.iterations.len(),
        }
    })?;
    let wall = started.elapsed().as_secs_f64();
    let rows = result_rows(&trace, &cfg.ruler.deltas, n, wall);
    let oracle_calls = eval.calls() + truncation.as_ref().map_or(0, |t| t.oracle_calls);
    Ok(CalibrationOutcome {
        rows,
        trace,
        truncation,
        ruler,
        start,
        oracle_calls,
        wall_time_s: wall,
    })
}

/// One row per threshold, in the order given.
pub fn result_rows(trace: &SrTrace, deltas: &[f64], n: usize, wall_time_s: f64) -> Vec<ResultRow> {
    let s = &trace.summary;
    deltas
        .iter()
        .map(|&delta| {
            let (hit, stop_reason) = match trace.first_below(delta) {
                Some(obs) => (Some(obs), StopReason::Threshold),
                None => (s.best_observed.clone(), StopReason::Budget),
            };
            let (h_hat, y_hat, x, t_f) = match hit {
                Some(o) if stop_reason == StopReason::Threshold => (o.h_hat, o.y_hat, o.x, o.t),
                Some(o) => (o.h_hat, o.y_hat, o.x, s.t_f),
                None => (
                    s.solution_h_hat.unwrap_or(f64::NAN),
                    s.solution_y_hat.clone().unwrap_or_else(|| vec![f64::NAN; n]),
                    s.solution_x.clone(),
                    s.t_f,
                ),
            };
            ResultRow {
                delta,
                delta_avg: fractional_deviation(delta, n),
                h_hat,
                delta_avg_obtained: fractional_deviation(h_hat, n),
                y_hat,
                x,
                t_f,
                stop_reason,
                wall_time_s,
            }
        })
        .collect()
}
