//! Backstepping kernels on triangular domains.
//!
//! Controller and inverse kernels live on the lower triangle `ξ ≤ x`,
//! observer kernels on the upper triangle `x ≤ ξ`. All of them are stored
//! on the node lattice of the shared [`SpatialGrid`].

mod control;
mod inverse;
mod observer;
mod transform;
mod weights;

use std::io::Write;

pub use control::{solve_control_kernels, KernelSet};
pub use inverse::{solve_inverse_kernels, InverseKernelSet};
pub use observer::{observer_gains, solve_observer_kernels, ObserverKernelSet};
pub use transform::{apply_inverse, apply_transform};
pub use weights::{realizability_factor, solve_integral_weights, IntegralWeights, REALIZABILITY_THRESHOLD};

use crate::error::{Error, Result};
use crate::model::SpatialGrid;

/// Stopping rule shared by the fixed-point kernel solvers.
pub const KERNEL_TOLERANCE: f64 = 1e-10;
pub const KERNEL_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// `0 ≤ ξ ≤ x ≤ 1`.
    Lower,
    /// `0 ≤ x ≤ ξ ≤ 1`.
    Upper,
}

/// Scalar field sampled on the nodes of a triangle.
///
/// Storage is a full `(n+1)²` array indexed `[i][j]` for `(x_i, ξ_j)`;
/// entries outside the declared triangle are kept at zero and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularField {
    n: usize,
    h: f64,
    orientation: Orientation,
    data: Vec<f64>,
}

impl TriangularField {
    pub fn zeros(grid: &SpatialGrid, orientation: Orientation) -> Self {
        let n = grid.n_cells();
        Self {
            n,
            h: grid.h(),
            orientation,
            data: vec![0.0; (n + 1) * (n + 1)],
        }
    }

    pub fn from_fn(grid: &SpatialGrid, orientation: Orientation, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, orientation);
        let idx: Vec<_> = out.indices().collect();
        for (i, j) in idx {
            out.set(i, j, f(grid.x(i), grid.x(j)));
        }
        out
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Whether `(i, j)` lies on the declared triangle.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i <= self.n
            && j <= self.n
            && match self.orientation {
                Orientation::Lower => j <= i,
                Orientation::Upper => i <= j,
            }
    }

    /// Node indices of the triangle, row by row.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        let o = self.orientation;
        (0..=n).flat_map(move |i| {
            let (lo, hi) = match o {
                Orientation::Lower => (0, i),
                Orientation::Upper => (i, n),
            };
            (lo..=hi).map(move |j| (i, j))
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.contains(i, j));
        self.data[i * (self.n + 1) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(self.contains(i, j));
        self.data[i * (self.n + 1) + j] = value;
    }

    /// Row `x_i` restricted to the triangle: `ξ_0..=ξ_i` (lower) or
    /// `ξ_i..=ξ_n` (upper).
    pub fn row(&self, i: usize) -> &[f64] {
        let base = i * (self.n + 1);
        match self.orientation {
            Orientation::Lower => &self.data[base..=base + i],
            Orientation::Upper => &self.data[base + i..=base + self.n],
        }
    }

    /// Piecewise-linear interpolation on the triangulated lattice; each cell
    /// is split along the direction parallel to the diagonal so diagonal
    /// cells never read outside the triangle. Arguments are clamped onto
    /// the triangle.
    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        match self.orientation {
            Orientation::Lower => self.eval_lower(x, xi.min(x), |i, j| self.get(i, j)),
            Orientation::Upper => self.eval_lower(xi, x.min(xi), |i, j| self.get(j, i)),
        }
    }

    #[inline]
    fn eval_lower(&self, x: f64, xi: f64, f: impl Fn(usize, usize) -> f64) -> f64 {
        let n = self.n;
        let s = (x / self.h).clamp(0.0, n as f64);
        let r = (xi / self.h).clamp(0.0, s);
        let i = (s.floor() as usize).min(n - 1);
        let j = (r.floor() as usize).min(i);
        let a = s - i as f64;
        let b = r - j as f64;
        let f00 = f(i, j);
        let f11 = f(i + 1, j + 1);
        if a >= b || i == j {
            let f10 = f(i + 1, j);
            f00 + a * (f10 - f00) + b * (f11 - f10)
        } else {
            let f01 = f(i, j + 1);
            f00 + b * (f01 - f00) + a * (f11 - f01)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.indices().map(|(i, j)| self.get(i, j).abs()).fold(0.0, f64::max)
    }

    /// Sup-norm of the difference on common nodes. `other` may be a
    /// refinement by an integer factor.
    pub fn max_diff_coarse(&self, fine: &TriangularField) -> Result<f64> {
        if !fine.n.is_multiple_of(self.n) || fine.orientation != self.orientation {
            return Err(Error::Parameter("fields are not nested".into()));
        }
        let r = fine.n / self.n;
        Ok(self
            .indices()
            .map(|(i, j)| (self.get(i, j) - fine.get(r * i, r * j)).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.indices().all(|(i, j)| self.get(i, j).is_finite())
    }
}

/// Writes named fields on a common triangle as CSV with columns
/// `x, xi, <name>...`.
pub fn write_fields_csv<W: Write>(writer: W, grid: &SpatialGrid, fields: &[(&str, &TriangularField)]) -> Result<()> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Parameter("no fields to export".into()))?
        .1;
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Parameter(format!("csv export failed: {e}"));
    let mut header = vec!["x".to_string(), "xi".to_string()];
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(io)?;
    for (i, j) in first.indices() {
        let mut rec = vec![grid.x(i).to_string(), grid.x(j).to_string()];
        rec.extend(fields.iter().map(|(_, f)| f.get(i, j).to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Parameter(format!("csv export failed: {e}")))?;
    Ok(())
}

/// Runs `sweep` until its returned update drops below `tolerance`.
pub(crate) fn fixed_point(
    what: &'static str,
    tolerance: f64,
    max_iterations: usize,
    mut sweep: impl FnMut() -> f64,
) -> Result<usize> {
    let mut history = Vec::new();
    for k in 0..max_iterations {
        let update = sweep();
        history.push(update);
        if !update.is_finite() {
            break;
        }
        if update < tolerance {
            return Ok(k + 1);
        }
    }
    Err(Error::Solver {
        what,
        iterations: history.len(),
        last_update: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}
