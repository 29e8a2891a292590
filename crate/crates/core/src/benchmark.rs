//! Benchmark curve estimation: the reference `g(s)` that deviations of the
//! mean surface are measured against.
//!
//! Two estimated regimes are supported, plus a raw pass-through:
//! - **initial mean** `g(s) = μ(0, s)`: a bias-corrected local linear fit at
//!   the left edge, using an enlarged auxiliary bandwidth `h̃ = h^(5/6)`
//!   evaluated at `t₀ = h̃`, the leftmost point of its own trimmed window.
//!   Oversmoothing makes the benchmark's fluctuation negligible relative to
//!   the main surface's, which is what downstream quantiles assume.
//! - **prefix average** `g(s) = (1/(n·x0)) Σ_{j ≤ ⌊x0·n⌋} X_j(s)`: the raw
//!   time average over the burn-in window `[0, x0]`. The divisor is `n·x0`
//!   (not the summand count); the two differ by O(1/n) when `x0·n` is not
//!   an integer, and we keep the analytically convenient form.
//! - **fixed**: a user-supplied curve on the series' observation grid.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::series::FunctionalSeries;
use crate::smoother::bias_corrected_at;

/// Tolerance before `floor` when mapping `x0·n` to a count, so grid-exact
/// products are not pushed down by one ulp.
const COUNT_EPS: f64 = 1e-9;

/// Which estimator produced a benchmark curve.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchmarkKind {
    /// Left-edge mean, fitted with auxiliary bandwidth `h_aux = h^(5/6)`.
    InitialMean { h_aux: f64 },
    /// Raw average of the first `⌊x0·n⌋` curves with divisor `n·x0`.
    PrefixAverage { x0: f64 },
    /// User-supplied curve, passed through untouched.
    Fixed,
}

impl BenchmarkKind {
    /// Stable label used in serialized configuration echoes.
    pub fn label(&self) -> &'static str {
        match self {
            BenchmarkKind::InitialMean { .. } => "initial",
            BenchmarkKind::PrefixAverage { .. } => "prefix-mean",
            BenchmarkKind::Fixed => "fixed",
        }
    }
}

/// A benchmark curve on the observation grid of its source series.
#[derive(Debug, Clone)]
pub struct BenchmarkEstimate {
    values: Vec<f64>,
    kind: BenchmarkKind,
}

impl BenchmarkEstimate {
    /// Benchmark values, one per observation grid point.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The estimator that produced this curve.
    pub fn kind(&self) -> &BenchmarkKind {
        &self.kind
    }
}

/// Estimates the initial mean `g(s) = μ(0, s)` by a bias-corrected local
/// linear fit with auxiliary bandwidth `h̃ = h^(5/6)` at `t₀ = h̃`.
///
/// `h` is the main bandwidth; the enlargement keeps the benchmark smoother
/// than the surface it is compared against. Requires `h̃ < 1/2`, i.e.
/// `h < 0.5^(6/5) ≈ 0.435`; larger values leave no admissible window.
pub fn benchmark_initial(
    series: &FunctionalSeries,
    kernel: &Kernel,
    h: f64,
) -> Result<BenchmarkEstimate> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidConfig {
            reason: format!("bandwidth must lie in (0, 0.5), got {h}"),
        });
    }
    let h_aux = h.powf(5.0 / 6.0);
    if h_aux >= 0.5 {
        return Err(Error::InvalidConfig {
            reason: format!(
                "auxiliary bandwidth h^(5/6) = {h_aux:.4} >= 0.5; \
                 use a main bandwidth below 0.435"
            ),
        });
    }
    let values = bias_corrected_at(series, kernel, h_aux, h_aux)?;
    Ok(BenchmarkEstimate {
        values,
        kind: BenchmarkKind::InitialMean { h_aux },
    })
}

/// Averages the curves with design points in `[0, x0]`, divided by `n·x0`.
pub fn benchmark_prefix_mean(series: &FunctionalSeries, x0: f64) -> Result<BenchmarkEstimate> {
    if !(x0.is_finite() && 0.0 < x0 && x0 < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("prefix endpoint x0 must lie in (0, 1), got {x0}"),
        });
    }
    let n = series.n();
    let count = (x0 * n as f64 + COUNT_EPS).floor() as usize;
    if count == 0 {
        return Err(Error::EmptyPrefix { x0, n });
    }
    let mut values = vec![0.0; series.n_points()];
    for j in 0..count {
        for (v, &x) in values.iter_mut().zip(series.row(j)) {
            *v += x;
        }
    }
    let scale = 1.0 / (n as f64 * x0);
    for v in &mut values {
        *v *= scale;
    }
    Ok(BenchmarkEstimate {
        values,
        kind: BenchmarkKind::PrefixAverage { x0 },
    })
}

/// Wraps a user-supplied curve; it must match the series' observation grid
/// in length and be finite.
pub fn benchmark_fixed(series: &FunctionalSeries, values: Vec<f64>) -> Result<BenchmarkEstimate> {
    if values.len() != series.n_points() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "fixed benchmark has {} values; series grid has {}",
                values.len(),
                series.n_points()
            ),
        });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig {
            reason: format!("fixed benchmark contains a non-finite value {bad}"),
        });
    }
    Ok(BenchmarkEstimate {
        values,
        kind: BenchmarkKind::Fixed,
    })
}
