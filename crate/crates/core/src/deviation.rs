//! Deviation surface `d̂(t,s) = μ̃(t,s) − ĝ(s)`, its supremum `d̂∞`, and
//! near-maximizer ("extremal") sets on the observation grid.
//!
//! The bootstrap that calibrates the test statistic is evaluated only where
//! the deviation is within `ρ` of its supremum — the law of the sup-statistic
//! is driven by the near-argmax region, and restricting to it is what makes
//! the procedure powerful for small thresholds. Points are tagged with the
//! sign of the near-maximal deviation; a point can carry both tags when the
//! band is wide enough to cover both `+d̂` and `−d̂`.

use ndarray::Array2;

use crate::benchmark::BenchmarkEstimate;
use crate::error::{Error, Result};
use crate::smoother::MeanSurface;

/// The deviation of a fitted mean surface from a benchmark curve.
#[derive(Debug, Clone)]
pub struct DeviationSurface {
    values: Array2<f64>,
    t_grid: Vec<f64>,
    s_grid: Vec<f64>,
    sup: f64,
    argmax: Vec<(usize, usize)>,
}

impl DeviationSurface {
    /// Deviation values, `|t_grid|` by `N`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Evaluation grid in the time direction.
    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// Observation grid.
    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    /// The supremum `d̂∞ = max |d̂|` over the whole grid.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// All grid coordinates `(t_index, s_index)` attaining the supremum,
    /// in row-major scan order.
    pub fn argmax(&self) -> &[(usize, usize)] {
        &self.argmax
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i).to_slice().expect("row-major storage")
    }
}

/// Subtracts the benchmark from each surface row and records the supremum
/// of the absolute deviation together with every argmax.
pub fn deviation_surface(
    surface: &MeanSurface,
    bench: &BenchmarkEstimate,
) -> Result<DeviationSurface> {
    if bench.values().len() != surface.s_grid().len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "benchmark has {} values; surface grid has {}",
                bench.values().len(),
                surface.s_grid().len()
            ),
        });
    }
    let mut values = surface.values().clone();
    for mut row in values.rows_mut() {
        let row = row.as_slice_mut().expect("row-major storage");
        for (v, g) in row.iter_mut().zip(bench.values()) {
            *v -= g;
        }
    }
    let mut sup = 0.0f64;
    for &v in values.iter() {
        sup = sup.max(v.abs());
    }
    let mut argmax = Vec::new();
    for (ti, row) in values.rows().into_iter().enumerate() {
        for (si, &v) in row.iter().enumerate() {
            if v.abs() == sup {
                argmax.push((ti, si));
            }
        }
    }
    Ok(DeviationSurface {
        values,
        t_grid: surface.t_grid().to_vec(),
        s_grid: surface.s_grid().to_vec(),
        sup,
        argmax,
    })
}

/// Sign of the deviation branch a grid point was selected for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

/// A signed near-maximizer on the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtremalPoint {
    pub t_index: usize,
    pub s_index: usize,
    pub sign: Sign,
}

/// The set of grid points whose signed deviation comes within `rho` of the
/// supremum.
#[derive(Debug, Clone)]
pub struct ExtremalSet {
    points: Vec<ExtremalPoint>,
    rho: f64,
}

impl ExtremalSet {
    /// Builds a set from explicit points (for restricting the bootstrap to a
    /// hand-chosen region). Points must be nonempty.
    pub fn from_points(points: Vec<ExtremalPoint>, rho: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyExtremalSet);
        }
        Ok(ExtremalSet { points, rho })
    }

    /// Signed points in row-major scan order (`+` before `−` at equal
    /// coordinates).
    pub fn points(&self) -> &[ExtremalPoint] {
        &self.points
    }

    /// The band width the set was built with.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of signed points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false by construction.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct `(t_index, s_index)` coordinates in scan order, with points
    /// carrying both signs listed once.
    pub fn unique_coordinates(&self) -> Vec<(usize, usize)> {
        let mut coords: Vec<(usize, usize)> =
            self.points.iter().map(|p| (p.t_index, p.s_index)).collect();
        coords.sort_unstable();
        coords.dedup();
        coords
    }
}

/// Default band width `ρ = 0.1·ln(n)/√(n·h)`: a slowly growing multiple of
/// the surface's uniform fluctuation scale.
pub fn default_rho(n: usize, h: f64) -> f64 {
    0.1 * (n as f64).ln() / (n as f64 * h).sqrt()
}

/// Collects every grid point with `+d̂(t,s) ≥ d̂∞ − ρ` (tagged `+`) or
/// `−d̂(t,s) ≥ d̂∞ − ρ` (tagged `−`). Nonempty for any `ρ ≥ 0`: the argmax
/// always qualifies on its own sign's side.
pub fn extremal_set(dev: &DeviationSurface, rho: f64) -> Result<ExtremalSet> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidConfig {
            reason: format!("extremal band rho must be finite and >= 0, got {rho}"),
        });
    }
    let threshold = dev.sup - rho;
    let mut points = Vec::new();
    for (ti, row) in dev.values.rows().into_iter().enumerate() {
        for (si, &v) in row.iter().enumerate() {
            if v >= threshold {
                points.push(ExtremalPoint { t_index: ti, s_index: si, sign: Sign::Plus });
            }
            if -v >= threshold {
                points.push(ExtremalPoint { t_index: ti, s_index: si, sign: Sign::Minus });
            }
        }
    }
    debug_assert!(!points.is_empty(), "argmax must qualify");
    ExtremalSet::from_points(points, rho)
}
