//! Monotone benchmark oracles with enumerable optima.
//!
//! Means are defined on the normalised lattice position `u_j = i_j / (k_j - 1)`
//! of each coordinate, so the same family can be placed on axes of any scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{objective_h, CalibrationTargets, ObjectiveError, Oracle, OracleError};
use crate::ruler::{DiscreteSpace, LatticeError};

/// Largest lattice [`brute_force_optimum`] will enumerate.
pub const MAX_ENUMERATION: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("mean family shape does not match: {0}")]
    Shape(String),
    #[error("outcome {outcome} decreases from {from:?} to {to:?}")]
    NotMonotone {
        outcome: usize,
        from: Vec<usize>,
        to: Vec<usize>,
    },
    #[error("outcome {outcome} is negative at {at:?}")]
    NegativeMean { outcome: usize, at: Vec<usize> },
    #[error("noise standard deviations must be finite and non-negative")]
    BadNoise,
    #[error("lattice has {0} points; enumeration is limited to {MAX_ENUMERATION}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeanFamily {
    /// `y_i = intercept_i + sum_j weights_ij * u_j`
    Affine {
        intercept: Vec<f64>,
        weights: Vec<Vec<f64>>,
    },
    /// `y_i = scale_i * prod_j (1 + rates_ij * u_j)`
    Product {
        scale: Vec<f64>,
        rates: Vec<Vec<f64>>,
    },
    /// Explicit means, one row per lattice point in lexicographic order.
    Table { means: Vec<Vec<f64>> },
}

impl MeanFamily {
    fn outcome_dim(&self) -> usize {
        match self {
            MeanFamily::Affine { intercept, .. } => intercept.len(),
            MeanFamily::Product { scale, .. } => scale.len(),
            MeanFamily::Table { means } => means.first().map_or(0, Vec::len),
        }
    }

    fn check_shape(&self, space: &DiscreteSpace) -> Result<(), SyntheticError> {
        let m = space.dim();
        let rows_ok = |rows: &Vec<Vec<f64>>, n: usize| rows.len() == n && rows.iter().all(|r| r.len() == m);
        match self {
            MeanFamily::Affine { intercept, weights } if !rows_ok(weights, intercept.len()) => Err(
                SyntheticError::Shape(format!("weights must be {} x {m}", intercept.len())),
            ),
            MeanFamily::Product { scale, rates } if !rows_ok(rates, scale.len()) => Err(
                SyntheticError::Shape(format!("rates must be {} x {m}", scale.len())),
            ),
            MeanFamily::Table { means }
                if means.len() != space.size()
                    || means.iter().any(|r| r.len() != self.outcome_dim()) =>
            {
                Err(SyntheticError::Shape(format!(
                    "table needs {} rows of equal length",
                    space.size()
                )))
            }
            _ if self.outcome_dim() == 0 => Err(SyntheticError::Shape("no outcomes".into())),
            _ => Ok(()),
        }
    }

    fn mean_at(&self, space: &DiscreteSpace, index: &[usize]) -> Vec<f64> {
        let u: Vec<f64> = index
            .iter()
            .zip(space.cardinalities())
            .map(|(&i, k)| if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 })
            .collect();
        match self {
            MeanFamily::Affine { intercept, weights } => intercept
                .iter()
                .zip(weights)
                .map(|(c, w)| c + w.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>())
                .collect(),
            MeanFamily::Product { scale, rates } => scale
                .iter()
                .zip(rates)
                .map(|(s, r)| s * r.iter().zip(&u).map(|(a, b)| 1.0 + a * b).product::<f64>())
                .collect(),
            MeanFamily::Table { means } => {
                means[space.linear_index(index).expect("index on lattice")].clone()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    Values(Vec<f64>),
    /// Targets equal to the mean at this lattice point.
    AtPoint(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub axes: DiscreteSpace,
    pub means: MeanFamily,
    #[serde(default)]
    pub noise_sd: Vec<f64>,
    pub targets: TargetSpec,
}

#[derive(Debug, Clone)]
pub struct MonotoneTestProblem {
    pub space: DiscreteSpace,
    pub family: MeanFamily,
    pub noise_sd: Vec<f64>,
    pub targets: CalibrationTargets,
    pub true_optimum: (Vec<usize>, f64),
    means: Vec<Vec<f64>>,
}

/// Build a problem, rejecting mean families that decrease anywhere along a
/// lattice edge.
pub fn make_problem(spec: ProblemSpec) -> Result<MonotoneTestProblem, SyntheticError> {
    let space = spec.axes;
    spec.means.check_shape(&space)?;
    if space.size() > MAX_ENUMERATION {
        return Err(SyntheticError::TooLarge(space.size()));
    }
    let n = spec.means.outcome_dim();
    let noise_sd = if spec.noise_sd.is_empty() {
        vec![0.0; n]
    } else {
        spec.noise_sd
    };
    if noise_sd.len() != n || noise_sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(SyntheticError::BadNoise);
    }
    let means: Vec<Vec<f64>> = space
        .indices()
        .map(|idx| spec.means.mean_at(&space, &idx))
        .collect();
    check_monotone(&space, &means)?;
    let targets = match spec.targets {
        TargetSpec::Values(v) => CalibrationTargets::new(v)?,
        TargetSpec::AtPoint(idx) => {
            CalibrationTargets::new(means[space.linear_index(&idx)?].clone())?
        }
    };
    let mut problem = MonotoneTestProblem {
        space,
        family: spec.means,
        noise_sd,
        targets,
        true_optimum: (Vec::new(), f64::NAN),
        means,
    };
    problem.true_optimum = brute_force_optimum(&problem)?;
    Ok(problem)
}

fn check_monotone(space: &DiscreteSpace, means: &[Vec<f64>]) -> Result<(), SyntheticError> {
    for (l, idx) in space.indices().enumerate() {
        if let Some(outcome) = means[l].iter().position(|v| *v < 0.0) {
            return Err(SyntheticError::NegativeMean {
                outcome,
                at: idx,
            });
        }
        for axis in 0..space.dim() {
            if idx[axis] + 1 >= space.axis(axis).len() {
                continue;
            }
            let mut up = idx.clone();
            up[axis] += 1;
            let lu = space.linear_index(&up).expect("in range");
            if let Some(outcome) = (0..means[l].len()).find(|&i| means[lu][i] < means[l][i]) {
                return Err(SyntheticError::NotMonotone {
                    outcome,
                    from: idx,
                    to: up,
                });
            }
        }
    }
    Ok(())
}

impl MonotoneTestProblem {
    pub fn mean(&self, index: &[usize]) -> Result<&[f64], LatticeError> {
        Ok(&self.means[self.space.linear_index(index)?])
    }

    /// `h` of the noiseless mean outcome at `index`.
    pub fn true_objective(&self, index: &[usize]) -> Result<f64, SyntheticError> {
        Ok(objective_h(self.mean(index)?, &self.targets)?)
    }

    pub fn outcome_dim(&self) -> usize {
        self.targets.len()
    }

    /// Strictly increasing table means on a random lattice with at most
    /// `max_k` values per axis, its targets placed at a random lattice point.
    pub fn random_strictly_monotone(
        rng: &mut impl Rng,
        m: usize,
        n: usize,
        max_k: usize,
    ) -> Result<Self, SyntheticError> {
        let axes: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let k = rng.random_range(3..=max_k.max(3));
                (0..k).map(|i| i as f64).collect()
            })
            .collect();
        let space = DiscreteSpace::new(axes)?;
        // y_i(x) = c_i + sum_j g_ij(x_j) with each g_ij strictly increasing
        let increments: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|j| {
                        let mut acc = 0.0;
                        let mut g = vec![0.0];
                        for _ in 1..space.axis(j).len() {
                            acc += rng.random_range(0.05..1.0);
                            g.push(acc);
                        }
                        g
                    })
                    .collect()
            })
            .collect();
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let means = space
            .indices()
            .map(|idx| {
                (0..n)
                    .map(|i| base[i] + idx.iter().enumerate().map(|(j, &v)| increments[i][j][v]).sum::<f64>())
                    .collect()
            })
            .collect();
        let at: Vec<usize> = space
            .cardinalities()
            .iter()
            .map(|&k| rng.random_range(0..k))
            .collect();
        make_problem(ProblemSpec {
            axes: space,
            means: MeanFamily::Table { means },
            noise_sd: Vec::new(),
            targets: TargetSpec::AtPoint(at),
        })
    }
}

/// Exhaustive argmin of the noiseless objective; ties go to the
/// lexicographically smallest index vector.
pub fn brute_force_optimum(
    problem: &MonotoneTestProblem,
) -> Result<(Vec<usize>, f64), SyntheticError> {
    brute_force_over(problem, problem.space.indices())
}

/// Argmin over an arbitrary collection of lattice points. The result does not
/// depend on the order in which `rows` are supplied.
pub fn brute_force_over<I>(
    problem: &MonotoneTestProblem,
    rows: I,
) -> Result<(Vec<usize>, f64), SyntheticError>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    if problem.space.size() > MAX_ENUMERATION {
        return Err(SyntheticError::TooLarge(problem.space.size()));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for idx in rows {
        let h = problem.true_objective(&idx)?;
        let better = match &best {
            None => true,
            Some((bi, bh)) => h < *bh || (h == *bh && idx < *bi),
        };
        if better {
            best = Some((idx, h));
        }
    }
    best.ok_or(SyntheticError::Shape("no rows to enumerate".into()))
}

impl Oracle for MonotoneTestProblem {
    fn outcome_dim(&self) -> usize {
        self.targets.len()
    }

    /// Mean plus independent normal noise per outcome, truncated at zero.
    fn replicate(&self, x: &[f64], seed: u64) -> Result<Vec<f64>, OracleError> {
        let idx = self
            .space
            .index_of(x)
            .map_err(|e| OracleError::Failed(e.to_string()))?;
        let mean = &self.means[self.space.linear_index(&idx).expect("on lattice")];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(mean
            .iter()
            .zip(&self.noise_sd)
            .map(|(&mu, &sd)| {
                if sd == 0.0 {
                    return mu;
                }
                let normal = Normal::new(mu, sd).expect("sd validated");
                loop {
                    let v = normal.sample(&mut rng);
                    if v >= 0.0 {
                        break v;
                    }
                }
            })
            .collect())
    }
}

/// The benchmark used by the harness `bench` command and the end-to-end tests.
///
/// The corner means follow the preliminary corner runs of the HCV model
/// (antibody, RNA, IDU prevalence in percent); antibody and RNA depend on the
/// first two parameters only and IDU prevalence on the third only.
pub fn hcv_like_problem(noise_sd: Vec<f64>, targets: TargetSpec) -> Result<MonotoneTestProblem, SyntheticError> {
    make_problem(ProblemSpec {
        axes: DiscreteSpace::hcv_default(),
        means: hcv_like_means(),
        noise_sd,
        targets,
    })
}

pub fn hcv_like_means() -> MeanFamily {
    MeanFamily::Affine {
        intercept: vec![1.17, 0.934, 0.087],
        weights: vec![vec![1.92, 1.92, 0.0], vec![1.533, 1.533, 0.0], vec![0.0, 0.0, 0.043]],
    }
}

/// Every outcome increases in every parameter, with the same corner values
/// as [`hcv_like_means`].
pub fn interior_means() -> MeanFamily {
    MeanFamily::Affine {
        intercept: vec![1.17, 0.934, 0.087],
        weights: vec![vec![1.5, 1.5, 0.84], vec![1.2, 1.2, 0.666], vec![0.01, 0.01, 0.023]],
    }
}

/// Lattice point whose mean is the target of [`interior_target_problem`].
pub const INTERIOR_TARGET: [usize; 3] = [4, 2, 2];

/// Benchmark for truncation: the default lattice with the targets at the mean
/// of the central point, so both dominance cones are non-trivial. Noise is
/// `noise_frac` times each target.
pub fn interior_target_problem(noise_frac: f64) -> Result<MonotoneTestProblem, SyntheticError> {
    let exact = make_problem(ProblemSpec {
        axes: DiscreteSpace::hcv_default(),
        means: interior_means(),
        noise_sd: Vec::new(),
        targets: TargetSpec::AtPoint(INTERIOR_TARGET.to_vec()),
    })?;
    make_problem(ProblemSpec {
        axes: exact.space.clone(),
        means: interior_means(),
        noise_sd: exact.targets.values().iter().map(|t| t * noise_frac).collect(),
        targets: TargetSpec::AtPoint(INTERIOR_TARGET.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prevalence_targets() -> TargetSpec {
        TargetSpec::Values(vec![3.6, 2.6, 0.1])
    }

    #[test]
    fn constant_at_target_is_optimal_everywhere() {
        let space = DiscreteSpace::hcv_default();
        let p = make_problem(ProblemSpec {
            axes: space.clone(),
            means: MeanFamily::Affine {
                intercept: vec![3.6, 2.6, 0.1],
                weights: vec![vec![0.0; 3]; 3],
            },
            noise_sd: vec![],
            targets: prevalence_targets(),
        })
        .unwrap();
        assert_eq!(p.true_optimum.0, vec![0, 0, 0]);
        assert_eq!(p.true_optimum.1, 0.0);
        for idx in space.indices() {
            assert_eq!(p.true_objective(&idx).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_axis_identity() {
        let p = make_problem(ProblemSpec {
            axes: DiscreteSpace::new(vec![vec![1.0, 2.0, 3.0]]).unwrap(),
            means: MeanFamily::Affine {
                intercept: vec![1.0],
                weights: vec![vec![2.0]],
            },
            noise_sd: vec![],
            targets: TargetSpec::Values(vec![2.0]),
        })
        .unwrap();
        assert_eq!(p.true_optimum, (vec![1], 0.0));
    }

    #[test]
    fn noiseless_oracle_returns_mean() {
        let p = hcv_like_problem(vec![], prevalence_targets()).unwrap();
        let x = p.space.point(&[3, 1, 4]).unwrap();
        assert_eq!(p.replicate(&x, 99).unwrap(), p.mean(&[3, 1, 4]).unwrap());
    }

    #[test]
    fn hcv_like_corners() {
        let p = hcv_like_problem(vec![], prevalence_targets()).unwrap();
        let lo = p.mean(&[0, 0, 0]).unwrap();
        let hi = p.mean(&[8, 4, 4]).unwrap();
        for (a, b) in lo.iter().zip([1.17, 0.934, 0.087]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in hi.iter().zip([5.01, 4.0, 0.13]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_monotone_and_bad_shapes() {
        let space = DiscreteSpace::hcv_default();
        let err = make_problem(ProblemSpec {
            axes: space.clone(),
            means: MeanFamily::Affine {
                intercept: vec![5.0],
                weights: vec![vec![1.0, -0.5, 0.0]],
            },
            noise_sd: vec![],
            targets: TargetSpec::Values(vec![1.0]),
        })
        .unwrap_err();
        assert!(matches!(err, SyntheticError::NotMonotone { outcome: 0, .. }));
        let err = make_problem(ProblemSpec {
            axes: space,
            means: MeanFamily::Affine {
                intercept: vec![5.0],
                weights: vec![vec![1.0]],
            },
            noise_sd: vec![],
            targets: TargetSpec::Values(vec![1.0]),
        })
        .unwrap_err();
        assert!(matches!(err, SyntheticError::Shape(_)));
    }

    #[test]
    fn product_family_is_monotone() {
        let p = make_problem(ProblemSpec {
            axes: DiscreteSpace::hcv_default(),
            means: MeanFamily::Product {
                scale: vec![1.0, 0.8],
                rates: vec![vec![1.0, 2.0, 0.0], vec![0.5, 0.5, 0.5]],
            },
            noise_sd: vec![0.1, 0.1],
            targets: TargetSpec::Values(vec![2.0, 1.0]),
        })
        .unwrap();
        assert!((p.mean(&[8, 4, 4]).unwrap()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_draws_are_unbiased_when_far_from_zero() {
        let p = hcv_like_problem(vec![0.3, 0.2, 0.005], prevalence_targets()).unwrap();
        let idx = [4, 2, 2];
        let x = p.space.point(&idx).unwrap();
        let mean = p.mean(&idx).unwrap().to_vec();
        let draws = 10_000;
        let mut sums = [0.0; 3];
        for s in 0..draws {
            for (acc, v) in sums.iter_mut().zip(p.replicate(&x, s).unwrap()) {
                *acc += v;
            }
        }
        for i in 0..3 {
            let se = p.noise_sd[i] / (draws as f64).sqrt();
            let avg = sums[i] / draws as f64;
            assert!((avg - mean[i]).abs() < 4.0 * se, "outcome {i}: {avg} vs {}", mean[i]);
        }
    }

    #[test]
    fn noisy_draws_never_negative() {
        let p = hcv_like_problem(vec![2.0, 2.0, 0.2], prevalence_targets()).unwrap();
        let x = p.space.point(&[0, 0, 0]).unwrap();
        for s in 0..2000 {
            assert!(p.replicate(&x, s).unwrap().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn random_problems_are_strictly_monotone_with_zero_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = MonotoneTestProblem::random_strictly_monotone(&mut rng, 3, 3, 6).unwrap();
            assert_eq!(p.true_optimum.1, 0.0);
            for idx in p.space.indices() {
                for axis in 0..3 {
                    if idx[axis] + 1 < p.space.axis(axis).len() {
                        let mut up = idx.clone();
                        up[axis] += 1;
                        let (a, b) = (p.mean(&idx).unwrap(), p.mean(&up).unwrap());
                        assert!(a.iter().zip(b).all(|(u, v)| u < v));
                    }
                }
            }
        }
    }

    #[test]
    fn brute_force_ignores_row_order() {
        let p = hcv_like_problem(vec![], prevalence_targets()).unwrap();
        let mut rows: Vec<Vec<usize>> = p.space.indices().collect();
        let forward = brute_force_over(&p, rows.clone()).unwrap();
        rows.reverse();
        assert_eq!(brute_force_over(&p, rows.clone()).unwrap(), forward);
        rows.sort_by_key(|r| (r[2], r[0] * 7 % 9, r[1]));
        assert_eq!(brute_force_over(&p, rows).unwrap(), forward);
        assert_eq!(forward, p.true_optimum);
    }

    #[test]
    fn too_large_lattice_rejected() {
        let axis: Vec<f64> = (0..101).map(f64::from).collect();
        let err = make_problem(ProblemSpec {
            axes: DiscreteSpace::new(vec![axis; 3]).unwrap(),
            means: MeanFamily::Affine {
                intercept: vec![1.0],
                weights: vec![vec![1.0; 3]],
            },
            noise_sd: vec![],
            targets: TargetSpec::Values(vec![1.0]),
        })
        .unwrap_err();
        assert!(matches!(err, SyntheticError::TooLarge(1_030_301)));
    }
}
