use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("lattice needs at least one axis")]
    NoAxes,
    #[error("axis {axis} is empty")]
    EmptyAxis { axis: usize },
    #[error("axis {axis} is not strictly increasing at position {position}")]
    NotIncreasing { axis: usize, position: usize },
    #[error("axis {axis} holds a non-finite value")]
    NonFinite { axis: usize },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value {value} is not on axis {axis}")]
    OffLattice { axis: usize, value: f64 },
    #[error("index {index} out of range for axis {axis} of length {len}")]
    IndexOutOfRange { axis: usize, index: usize, len: usize },
    #[error("axis {axis} has {len} values; the wrap-around neighborhood needs at least 3")]
    AxisTooShort { axis: usize, len: usize },
}

const REL_TOL: f64 = 1e-9;

/// Cartesian product of finite, strictly increasing axes.
///
/// Points are addressed by index vectors; [`DiscreteSpace::point`] and
/// [`DiscreteSpace::index_of`] convert between the two representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DiscreteSpace {
    axes: Vec<Vec<f64>>,
}

impl DiscreteSpace {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self, LatticeError> {
        if axes.is_empty() {
            return Err(LatticeError::NoAxes);
        }
        for (axis, values) in axes.iter().enumerate() {
            if values.is_empty() {
                return Err(LatticeError::EmptyAxis { axis });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(LatticeError::NonFinite { axis });
            }
            if let Some(position) = values.windows(2).position(|w| w[0] >= w[1]) {
                return Err(LatticeError::NotIncreasing {
                    axis,
                    position: position + 1,
                });
            }
        }
        Ok(Self { axes })
    }

    /// The 9 x 5 x 5 lattice of medical infection probability, needle-sharing
    /// probability and influence probability used for the HCV model.
    pub fn hcv_default() -> Self {
        Self::new(vec![
            vec![
                0.035, 0.03525, 0.0355, 0.03575, 0.036, 0.03625, 0.0365, 0.03675, 0.037,
            ],
            vec![0.2, 0.25, 0.3, 0.35, 0.4],
            vec![1.9e-5, 2.0e-5, 2.1e-5, 2.2e-5, 2.3e-5],
        ])
        .expect("static axes are valid")
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn min_cardinality(&self) -> usize {
        self.axes.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn lower_corner(&self) -> Vec<usize> {
        vec![0; self.dim()]
    }

    pub fn upper_corner(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len() - 1).collect()
    }

    fn check_index(&self, index: &[usize]) -> Result<(), LatticeError> {
        if index.len() != self.dim() {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dim(),
                got: index.len(),
            });
        }
        for (axis, (&i, values)) in index.iter().zip(&self.axes).enumerate() {
            if i >= values.len() {
                return Err(LatticeError::IndexOutOfRange {
                    axis,
                    index: i,
                    len: values.len(),
                });
            }
        }
        Ok(())
    }

    pub fn point(&self, index: &[usize]) -> Result<Vec<f64>, LatticeError> {
        self.check_index(index)?;
        Ok(index.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect())
    }

    pub fn index_of(&self, x: &[f64]) -> Result<Vec<usize>, LatticeError> {
        if x.len() != self.dim() {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        x.iter()
            .zip(&self.axes)
            .enumerate()
            .map(|(axis, (&v, values))| {
                values
                    .iter()
                    .position(|&a| (a - v).abs() <= REL_TOL * a.abs().max(v.abs()))
                    .ok_or(LatticeError::OffLattice { axis, value: v })
            })
            .collect()
    }

    /// Row-major position of `index`; the last axis varies fastest, so linear
    /// order equals lexicographic order of index vectors.
    pub fn linear_index(&self, index: &[usize]) -> Result<usize, LatticeError> {
        self.check_index(index)?;
        Ok(index
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.len() + i))
    }

    pub fn from_linear(&self, mut linear: usize) -> Result<Vec<usize>, LatticeError> {
        if linear >= self.size() {
            return Err(LatticeError::IndexOutOfRange {
                axis: 0,
                index: linear,
                len: self.size(),
            });
        }
        let mut index = vec![0; self.dim()];
        for (slot, a) in index.iter_mut().zip(&self.axes).rev() {
            *slot = linear % a.len();
            linear /= a.len();
        }
        Ok(index)
    }

    /// All index vectors in lexicographic order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size()).map(|l| self.from_linear(l).expect("in range"))
    }

    /// The three wrap-around neighbors `(j-1, j, j+1)` of position `j` on
    /// `axis`.
    pub fn axis_neighbors(&self, axis: usize, j: usize) -> Result<[usize; 3], LatticeError> {
        let len = self.axes[axis].len();
        if len < 3 {
            return Err(LatticeError::AxisTooShort { axis, len });
        }
        if j >= len {
            return Err(LatticeError::IndexOutOfRange { axis, index: j, len });
        }
        Ok([(j + len - 1) % len, j, (j + 1) % len])
    }

    /// Cartesian product of the per-axis neighbor sets, excluding `index`
    /// itself. Always has `3^m - 1` elements.
    pub fn neighbors(&self, index: &[usize]) -> Result<Vec<Vec<usize>>, LatticeError> {
        self.check_index(index)?;
        let per_axis = index
            .iter()
            .enumerate()
            .map(|(axis, &j)| self.axis_neighbors(axis, j))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out: Vec<Vec<usize>> = vec![Vec::with_capacity(self.dim())];
        for choices in &per_axis {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        out.retain(|p| p.as_slice() != index);
        Ok(out)
    }

    pub fn check_neighborhood(&self) -> Result<(), LatticeError> {
        match self.axes.iter().position(|a| a.len() < 3) {
            Some(axis) => Err(LatticeError::AxisTooShort {
                axis,
                len: self.axes[axis].len(),
            }),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for DiscreteSpace {
    type Error = LatticeError;

    fn try_from(axes: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::new(axes)
    }
}

impl From<DiscreteSpace> for Vec<Vec<f64>> {
    fn from(s: DiscreteSpace) -> Self {
        s.axes
    }
}

/// A lattice, optionally restricted to a subset of its points.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    lattice: DiscreteSpace,
    allowed: Option<Vec<bool>>,
}

impl SearchSpace {
    pub fn full(lattice: DiscreteSpace) -> Self {
        Self {
            lattice,
            allowed: None,
        }
    }

    pub fn restricted<I>(lattice: DiscreteSpace, rows: I) -> Result<Self, LatticeError>
    where
        I: IntoIterator,
        I::Item: AsRef<[usize]>,
    {
        let mut allowed = vec![false; lattice.size()];
        for row in rows {
            allowed[lattice.linear_index(row.as_ref())?] = true;
        }
        Ok(Self {
            lattice,
            allowed: Some(allowed),
        })
    }

    pub fn lattice(&self) -> &DiscreteSpace {
        &self.lattice
    }

    pub fn is_restricted(&self) -> bool {
        self.allowed.is_some()
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        match (&self.allowed, self.lattice.linear_index(index)) {
            (_, Err(_)) => false,
            (None, Ok(_)) => true,
            (Some(mask), Ok(l)) => mask[l],
        }
    }

    pub fn size(&self) -> usize {
        match &self.allowed {
            None => self.lattice.size(),
            Some(mask) => mask.iter().filter(|&&b| b).count(),
        }
    }

    /// Proposal set for a move away from `index`: its lattice neighbors that
    /// lie in the space. When a restricted space leaves none of them, every
    /// other allowed point is a candidate instead.
    pub fn candidates(&self, index: &[usize]) -> Result<Vec<Vec<usize>>, LatticeError> {
        let mut out = self.lattice.neighbors(index)?;
        if let Some(mask) = &self.allowed {
            out.retain(|p| mask[self.lattice.linear_index(p).expect("neighbor in range")]);
            if out.is_empty() {
                out = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &ok)| ok)
                    .map(|(l, _)| self.lattice.from_linear(l).expect("in range"))
                    .filter(|p| p.as_slice() != index)
                    .collect();
            }
        }
        Ok(out)
    }
}
