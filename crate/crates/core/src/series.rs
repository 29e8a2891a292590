//! Discretely observed functional time series.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A functional time series observed on a common grid: `n` curves (rows, in
/// time order, curve `j` sitting at design point `j/n`) by `N` grid points
/// (columns, at locations [`FunctionalSeries::s_grid`] in `[0, 1]`).
#[derive(Debug, Clone)]
pub struct FunctionalSeries {
    values: Array2<f64>,
    s_grid: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl FunctionalSeries {
    /// Builds a series, validating shape, grid monotonicity and finiteness.
    ///
    /// `labels` optionally names each curve (e.g. years); length must match
    /// the number of rows.
    pub fn new(
        values: Array2<f64>,
        s_grid: Vec<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, n_points) = values.dim();
        if n < 2 || n_points < 2 {
            return Err(Error::InvalidSeries {
                reason: format!("need at least 2 curves and 2 grid points, got {n}x{n_points}"),
            });
        }
        if s_grid.len() != n_points {
            return Err(Error::InvalidSeries {
                reason: format!(
                    "grid length {} does not match {} value columns",
                    s_grid.len(),
                    n_points
                ),
            });
        }
        for (i, &s) in s_grid.iter().enumerate() {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidSeries {
                    reason: format!("grid point {i} = {s} outside [0, 1]"),
                });
            }
            if i > 0 && s <= s_grid[i - 1] {
                return Err(Error::InvalidSeries {
                    reason: format!(
                        "grid not strictly increasing at index {i}: {} then {s}",
                        s_grid[i - 1]
                    ),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries {
                reason: "values contain NaN or infinity".into(),
            });
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::InvalidSeries {
                    reason: format!("{} labels for {n} curves", l.len()),
                });
            }
        }
        Ok(FunctionalSeries { values, s_grid, labels })
    }

    /// Number of curves `n`.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of grid points `N`.
    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    /// Observation matrix, `n` by `N`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Curve `j` (0-based row) as a contiguous slice.
    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j).to_slice().expect("row-major storage")
    }

    /// Common observation grid in `[0, 1]`.
    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    /// Optional per-curve labels.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// Trapezoidal quadrature of `f` sampled on `grid` (strictly increasing).
///
/// Exact for affine integrands; on a constant `c` it returns
/// `c * (grid.last - grid.first)` exactly.
pub(crate) fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), f.len());
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (f[i] + f[i - 1]);
    }
    acc
}
