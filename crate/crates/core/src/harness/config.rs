use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::CalibrationTargets;
use crate::ruler::{DiscreteSpace, MtSchedule};
use crate::sim::ModelParams;
use crate::synthetic::{hcv_like_means, make_problem, MeanFamily, ProblemSpec, TargetSpec};

pub const ENV_SEED: &str = "RULERCAL_SEED";
pub const ENV_OUT: &str = "RULERCAL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Abm,
    Synthetic,
}

/// Where the search starts: one of the two lattice extremes or an explicit
/// index vector. After truncation the extremes are the new ones.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum StartPoint {
    #[default]
    Lower,
    Upper,
    Index(Vec<usize>),
}

impl FromStr for StartPoint {
    type Err = String;

    /// Accepts `xl`, `xr` or a comma-separated index vector such as `1,4,0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "xl" => Ok(Self::Lower),
            "xr" => Ok(Self::Upper),
            other => other
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map(Self::Index)
                .map_err(|_| format!("expected xl, xr or an index list like 1,4,0, got '{s}'")),
        }
    }
}

impl fmt::Display for StartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lower => f.write_str("xl"),
            Self::Upper => f.write_str("xr"),
            Self::Index(v) => {
                let parts: Vec<String> = v.iter().map(usize::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StartRepr {
    Name(String),
    Index(Vec<usize>),
}

impl Serialize for StartPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Index(v) => StartRepr::Index(v.clone()),
            other => StartRepr::Name(other.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StartPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match StartRepr::deserialize(d)? {
            StartRepr::Index(v) => Ok(Self::Index(v)),
            StartRepr::Name(n) => n.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulerSection {
    pub a: f64,
    /// Upper ruler bound. Estimated from the extremes when absent.
    pub b: Option<f64>,
    /// Stopping thresholds. The search stops at the smallest; every entry
    /// gets a result row.
    pub deltas: Vec<f64>,
    pub budget: u64,
    pub mt_form: MtSchedule,
    pub start: StartPoint,
}

impl Default for RulerSection {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: None,
            deltas: vec![0.45],
            budget: 40,
            mt_form: MtSchedule::Text,
            start: StartPoint::Lower,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SstSection {
    pub enabled: bool,
    /// Replicates per truncation evaluation; defaults to the run's count.
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub means: MeanFamily,
    pub noise_sd: Vec<f64>,
    /// Use the mean at this lattice point as the targets.
    pub target_point: Option<Vec<usize>>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            means: hcv_like_means(),
            noise_sd: Vec::new(),
            target_point: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub axes: Vec<Vec<f64>>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            axes: DiscreteSpace::hcv_default().axes().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Replicates `k` per objective evaluation.
    pub replicates: usize,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub oracle: OracleKind,
    pub targets: Option<Vec<f64>>,
    pub model: ModelParams,
    pub synthetic: SyntheticSection,
    pub lattice: LatticeSection,
    pub ruler: RulerSection,
    pub sst: SstSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            replicates: 5,
            parallelism: 1,
            output_dir: PathBuf::from("rulercal-out"),
            oracle: OracleKind::Abm,
            targets: Some(vec![3.6, 2.6, 0.1]),
            model: ModelParams::default(),
            synthetic: SyntheticSection::default(),
            lattice: LatticeSection::default(),
            ruler: RulerSection::default(),
            sst: SstSection::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

/// One failed check, named by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Apply seed and output overrides from the environment, using `lookup`
    /// in place of `std::env::var` so callers can test it.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(s) = lookup(ENV_SEED) {
            self.master_seed = s.trim().parse().map_err(|_| {
                ConfigError::Invalid(vec![Violation {
                    field: ENV_SEED.into(),
                    message: format!("'{s}' is not an unsigned integer"),
                }])
            })?;
        }
        if let Some(dir) = lookup(ENV_OUT) {
            self.output_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn outcome_dim(&self) -> usize {
        match self.oracle {
            OracleKind::Abm => 3,
            OracleKind::Synthetic => match &self.synthetic.means {
                MeanFamily::Affine { intercept, .. } => intercept.len(),
                MeanFamily::Product { scale, .. } => scale.len(),
                MeanFamily::Table { means } => means.first().map_or(0, Vec::len),
            },
        }
    }

    /// The smallest configured threshold, which stops the search.
    pub fn min_delta(&self) -> f64 {
        self.ruler.deltas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = validate_config(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

/// Every violated constraint of the configuration, checked before any
/// simulation runs.
pub fn validate_config(cfg: &RunConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };

    if cfg.replicates == 0 {
        bad("replicates", "at least one replicate is required".into());
    }
    if cfg.parallelism == 0 {
        bad("parallelism", "must be at least 1".into());
    }
    if cfg.sst.replicates == Some(0) {
        bad("sst.replicates", "at least one replicate is required".into());
    }

    let lattice = match DiscreteSpace::new(cfg.lattice.axes.clone()) {
        Ok(space) => {
            if let Err(e) = space.check_neighborhood() {
                bad("lattice.axes", format!("neighborhood requires 3 or more values per axis: {e}"));
            }
            Some(space)
        }
        Err(e) => {
            bad("lattice.axes", e.to_string());
            None
        }
    };

    let r = &cfg.ruler;
    if !r.a.is_finite() {
        bad("ruler.a", format!("{} is not finite", r.a));
    }
    if let Some(b) = r.b {
        if !(b.is_finite() && b > r.a) {
            bad("ruler.b", format!("ruler needs a < b, got a = {} and b = {b}", r.a));
        }
    }
    if r.deltas.is_empty() {
        bad("ruler.deltas", "at least one threshold is required".into());
    }
    for (i, d) in r.deltas.iter().enumerate() {
        if d.is_nan() || *d <= r.a {
            bad(&format!("ruler.deltas[{i}]"), format!("{d} must exceed a = {}", r.a));
        }
    }

    let n_out = cfg.outcome_dim();
    match (&cfg.targets, cfg.oracle, &cfg.synthetic.target_point) {
        (Some(_), OracleKind::Synthetic, Some(_)) => bad(
            "targets",
            "give either targets or synthetic.target_point, not both".into(),
        ),
        (None, OracleKind::Synthetic, Some(_)) => {}
        (None, _, _) => bad("targets", "calibration targets are required".into()),
        (Some(t), _, _) => {
            if let Err(e) = CalibrationTargets::new(t.clone()) {
                bad("targets", e.to_string());
            } else if t.len() != n_out {
                bad("targets", format!("{} values for {n_out} outcomes", t.len()));
            }
        }
    }

    match cfg.oracle {
        OracleKind::Abm => {
            for e in cfg.model.violations() {
                let field = match &e {
                    crate::sim::ModelError::Invalid { field, .. } => format!("model.{field}"),
                    _ => "model".into(),
                };
                bad(&field, e.to_string());
            }
            if let Some(space) = &lattice {
                if space.dim() != 3 {
                    bad("lattice.axes", format!("the model has 3 calibration parameters, lattice has {}", space.dim()));
                } else {
                    for (corner, idx) in [("lower", space.lower_corner()), ("upper", space.upper_corner())] {
                        let x = space.point(&idx).expect("corner on lattice");
                        let checked = cfg.model.with_calibration(&x).map(|p| p.violations());
                        if let Ok(errs) = checked {
                            if let Some(e) = errs.first() {
                                bad("lattice.axes", format!("{corner} corner {x:?}: {e}"));
                            }
                        }
                    }
                }
            }
        }
        OracleKind::Synthetic => {
            if let Some(space) = &lattice {
                let targets = match (&cfg.synthetic.target_point, &cfg.targets) {
                    (Some(p), _) => Some(TargetSpec::AtPoint(p.clone())),
                    (None, Some(t)) => Some(TargetSpec::Values(t.clone())),
                    _ => None,
                };
                if let Some(targets) = targets {
                    if let Err(e) = make_problem(ProblemSpec {
                        axes: space.clone(),
                        means: cfg.synthetic.means.clone(),
                        noise_sd: cfg.synthetic.noise_sd.clone(),
                        targets,
                    }) {
                        bad("synthetic", e.to_string());
                    }
                }
            }
        }
    }
    out
}
