//! Bias-corrected local linear estimation of the time-varying mean surface.
//!
//! ## Design
//! Curve `j` sits at design point `j/n`. For an evaluation point `t` the
//! local linear weight of curve `j` at bandwidth `h` is
//!
//! ```text
//! w_j(t,h) = K((j/n - t)/h) * [S2 - (j/n - t) S1] / (S0 S2 - S1^2),
//! S_l      = sum_j K((j/n - t)/h) (j/n - t)^l,
//! ```
//!
//! the closed form of the first coordinate of the weighted least-squares
//! line fit (scale-invariant in the kernel normalization, so `K_h = K(./h)`
//! without a `1/h` factor). The bias-corrected estimate is the jackknife
//! combination `2 * muhat_{h/sqrt(2)} - muhat_h`, whose effective kernel is
//! `K*`; its interior bias is one order better than the plain fit.
//!
//! ## Invariants
//! - weights sum to one and are orthogonal to `j/n - t` (affine reproduction);
//! - surfaces are evaluated on the trimmed design grid
//!   `{j/n} ∩ [x0 ∨ h, x1 ∧ (1-h)]`, so no evaluation window is clipped;
//! - row construction parallelizes over `t` with bit-identical results for
//!   any thread count (each row is an independent pure function of the data).

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::series::FunctionalSeries;

/// Relative threshold below which the weighted design determinant counts as
/// collapsed (fewer than two effective support points).
const DEGENERATE_REL_TOL: f64 = 1e-14;

/// Tolerance used before floor/ceil when mapping real bounds to grid indices,
/// so exact products like `100 * 0.1` are not pushed off by one ulp.
const GRID_EPS: f64 = 1e-9;

/// Local linear weight vector of length `n` for evaluation point `t` and
/// bandwidth `h ∈ (0, 1)` over the design `{1/n, ..., n/n}`.
///
/// Errors with [`Error::DegenerateDesign`] when fewer than two design points
/// carry kernel weight or the weighted spread collapses.
pub fn local_linear_weights(kernel: &Kernel, t: f64, h: f64, n: usize) -> Result<Vec<f64>> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("bandwidth must lie in (0, 1), got {h}"),
        });
    }
    let (start, band) = window_weights(kernel, t, h, n)?;
    let mut full = vec![0.0; n];
    full[start..start + band.len()].copy_from_slice(&band);
    Ok(full)
}

/// The jackknife ops need `h < 1/2` so both the `h` and `h/sqrt(2)` windows
/// and the trimmed grid `[h, 1-h]` stay non-empty.
fn validate_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidConfig {
            reason: format!("bandwidth must lie in (0, 0.5), got {h}"),
        });
    }
    Ok(())
}

/// Banded weights: returns `(start, w)` where `start` is the 0-based row of
/// the first design point inside `[t-h, t+h]` and `w` covers the window.
fn window_weights(kernel: &Kernel, t: f64, h: f64, n: usize) -> Result<(usize, Vec<f64>)> {
    let nf = n as f64;
    let j_lo = ((nf * (t - h) - GRID_EPS).ceil() as i64).max(1) as usize;
    let j_hi = ((nf * (t + h) + GRID_EPS).floor() as i64).min(n as i64).max(0) as usize;
    if j_lo > j_hi {
        return Err(Error::DegenerateDesign { t, det: 0.0 });
    }
    let len = j_hi - j_lo + 1;
    let mut k = vec![0.0; len];
    let mut u = vec![0.0; len];
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (i, j) in (j_lo..=j_hi).enumerate() {
        let uj = j as f64 / nf - t;
        let kj = kernel.eval(uj / h);
        u[i] = uj;
        k[i] = kj;
        s0 += kj;
        s1 += kj * uj;
        s2 += kj * uj * uj;
    }
    let det = s0 * s2 - s1 * s1;
    if det <= DEGENERATE_REL_TOL * s0 * h * h {
        return Err(Error::DegenerateDesign { t, det });
    }
    let mut w = k;
    for i in 0..len {
        w[i] *= (s2 - u[i] * s1) / det;
    }
    Ok((j_lo - 1, w))
}

/// Local linear weights over an arbitrary strictly increasing design
/// (used by cross-validation, where folds are removed from the design).
///
/// Returns one weight per design point; points outside `[t-h, t+h]` get 0.
pub(crate) fn weights_for_design(
    kernel: &Kernel,
    t: f64,
    h: f64,
    design: &[f64],
) -> Result<Vec<f64>> {
    let mut k = vec![0.0; design.len()];
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (i, &x) in design.iter().enumerate() {
        let u = x - t;
        if u.abs() > h {
            continue;
        }
        let kj = kernel.eval(u / h);
        k[i] = kj;
        s0 += kj;
        s1 += kj * u;
        s2 += kj * u * u;
    }
    let det = s0 * s2 - s1 * s1;
    if det <= DEGENERATE_REL_TOL * s0 * h * h {
        return Err(Error::DegenerateDesign { t, det });
    }
    for (i, &x) in design.iter().enumerate() {
        k[i] *= (s2 - (x - t) * s1) / det;
    }
    Ok(k)
}

/// Jackknife-combined weights `2 w_{h/sqrt(2)} - w_h` on the `h`-window.
fn combined_window_weights(kernel: &Kernel, t: f64, h: f64, n: usize) -> Result<(usize, Vec<f64>)> {
    let (start_w, wide) = window_weights(kernel, t, h, n)?;
    let (start_n, narrow) = window_weights(kernel, t, h * std::f64::consts::FRAC_1_SQRT_2, n)?;
    let mut w: Vec<f64> = wide.iter().map(|x| -x).collect();
    debug_assert!(start_n >= start_w);
    let off = start_n - start_w;
    for (i, x) in narrow.iter().enumerate() {
        w[off + i] += 2.0 * x;
    }
    Ok((start_w, w))
}

/// Bias-corrected mean surface on the trimmed design grid.
#[derive(Debug, Clone)]
pub struct MeanSurface {
    values: Array2<f64>,
    t_grid: Vec<f64>,
    /// 1-based design indices `j` with `j/n` in the trimmed window
    /// (contiguous, so `t_grid[i] = j_index[i] / n`).
    j_index: Vec<usize>,
    s_grid: Vec<f64>,
    h: f64,
    n: usize,
}

impl MeanSurface {
    /// Estimated values, `|t_grid|` by `N`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Evaluation grid `{j/n} ∩ [x0 ∨ h, x1 ∧ (1-h)]`.
    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// 1-based design indices corresponding to [`MeanSurface::t_grid`].
    pub fn j_index(&self) -> &[usize] {
        &self.j_index
    }

    /// Observation grid shared with the source series.
    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    /// Bandwidth the surface was fitted at.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of curves in the source series.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `i` of the surface as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i).to_slice().expect("row-major storage")
    }
}

/// Design indices of the trimmed evaluation grid for window `[x0, x1]`,
/// returned as an inclusive 1-based range.
fn trimmed_range(n: usize, h: f64, x0: f64, x1: f64) -> Result<(usize, usize)> {
    let lo = x0.max(h);
    let hi = x1.min(1.0 - h);
    let nf = n as f64;
    let j_lo = ((nf * lo - GRID_EPS).ceil() as i64).max(1);
    let j_hi = ((nf * hi + GRID_EPS).floor() as i64).min(n as i64);
    if j_lo > j_hi {
        return Err(Error::EmptyWindow { lo, hi });
    }
    Ok((j_lo as usize, j_hi as usize))
}

fn validate_window(x0: f64, x1: f64) -> Result<()> {
    if !(x0.is_finite() && x1.is_finite() && (0.0..1.0).contains(&x0) && x1 > x0 && x1 <= 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("window must satisfy 0 <= x0 < x1 <= 1, got [{x0}, {x1}]"),
        });
    }
    Ok(())
}

/// Fits the bias-corrected surface `2 muhat_{h/sqrt(2)} - muhat_h` on the
/// trimmed grid `{j/n} ∩ [x0 ∨ h, x1 ∧ (1-h)]`.
///
/// Weight vectors are computed once per `t` and reused across all `N`
/// columns; rows are fitted in parallel.
pub fn bias_corrected_surface(
    series: &FunctionalSeries,
    kernel: &Kernel,
    h: f64,
    window: (f64, f64),
) -> Result<MeanSurface> {
    validate_h(h)?;
    validate_window(window.0, window.1)?;
    let n = series.n();
    let (j_lo, j_hi) = trimmed_range(n, h, window.0, window.1)?;
    let j_index: Vec<usize> = (j_lo..=j_hi).collect();
    let t_grid: Vec<f64> = j_index.iter().map(|&j| j as f64 / n as f64).collect();

    let n_points = series.n_points();
    let rows: Vec<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| -> Result<Vec<f64>> {
            let (start, w) = combined_window_weights(kernel, t, h, n)?;
            let mut out = vec![0.0; n_points];
            for (i, &wj) in w.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                let row = series.row(start + i);
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += wj * x;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut values = Array2::zeros((t_grid.len(), n_points));
    for (i, row) in rows.into_iter().enumerate() {
        values.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(MeanSurface {
        values,
        t_grid,
        j_index,
        s_grid: series.s_grid().to_vec(),
        h,
        n,
    })
}

/// Bias-corrected estimate at a single evaluation point `t` (not necessarily
/// a design point), returned as a curve over the observation grid.
pub fn bias_corrected_at(
    series: &FunctionalSeries,
    kernel: &Kernel,
    h: f64,
    t: f64,
) -> Result<Vec<f64>> {
    validate_h(h)?;
    let (start, w) = combined_window_weights(kernel, t, h, series.n())?;
    let mut out = vec![0.0; series.n_points()];
    for (i, &wj) in w.iter().enumerate() {
        if wj == 0.0 {
            continue;
        }
        let row = series.row(start + i);
        for (o, &x) in out.iter_mut().zip(row) {
            *o += wj * x;
        }
    }
    Ok(out)
}

/// Residuals `X_j(s_i) - mutilde(j/n, s_i)` for every curve of the series.
#[derive(Debug, Clone)]
pub struct ResidualMatrix {
    values: Array2<f64>,
    extrapolated: Vec<bool>,
}

impl ResidualMatrix {
    /// Wraps a raw matrix as residuals with no extrapolated rows (crate
    /// tests and synthetic diagnostics).
    #[cfg(test)]
    pub(crate) fn from_values(values: Array2<f64>) -> Self {
        let n = values.nrows();
        ResidualMatrix { values, extrapolated: vec![false; n] }
    }

    /// Residual matrix, `n` by `N`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Residual row `j` as a contiguous slice.
    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j).to_slice().expect("row-major storage")
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of grid points.
    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    /// `extrapolated[j]` is true when `j/n` fell outside the surface's
    /// trimmed grid and the nearest surface row was used instead.
    pub fn extrapolated(&self) -> &[bool] {
        &self.extrapolated
    }
}

/// Computes residuals of the series against a surface fitted *on that same
/// series*. Rows whose design point lies outside the trimmed grid use the
/// nearest surface row and are flagged.
pub fn residuals(series: &FunctionalSeries, surface: &MeanSurface) -> Result<ResidualMatrix> {
    if surface.n != series.n() || surface.s_grid != series.s_grid() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "surface fitted on n={}, {} grid points; series has n={}, {}",
                surface.n,
                surface.s_grid.len(),
                series.n(),
                series.n_points()
            ),
        });
    }
    let n = series.n();
    let first_j = surface.j_index[0];
    let last_j = *surface.j_index.last().expect("nonempty grid");
    let mut values = series.values().clone();
    let mut extrapolated = vec![false; n];
    for j in 1..=n {
        let (row_idx, extra) = if j < first_j {
            (0, true)
        } else if j > last_j {
            (surface.j_index.len() - 1, true)
        } else {
            (j - first_j, false)
        };
        extrapolated[j - 1] = extra;
        let mu = surface.row(row_idx);
        let mut row = values.row_mut(j - 1);
        let row = row.as_slice_mut().expect("row-major storage");
        for (r, &m) in row.iter_mut().zip(mu) {
            *r -= m;
        }
    }
    Ok(ResidualMatrix { values, extrapolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::triweight;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    fn series_from_fn(n: usize, n_points: usize, f: impl Fn(f64, f64) -> f64) -> FunctionalSeries {
        let s_grid = uniform_grid(n_points);
        let mut values = Array2::zeros((n, n_points));
        for j in 0..n {
            let t = (j + 1) as f64 / n as f64;
            for (i, &s) in s_grid.iter().enumerate() {
                values[[j, i]] = f(t, s);
            }
        }
        FunctionalSeries::new(values, s_grid, None).unwrap()
    }

    #[test]
    fn weight_identities_hold() {
        let k = Kernel::Triweight;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(50..2000);
            let h = rng.gen_range(0.05..0.3);
            let t = rng.gen_range(h..1.0 - h);
            let w = local_linear_weights(&k, t, h, n).unwrap();
            let sum: f64 = w.iter().sum();
            let dot: f64 = w
                .iter()
                .enumerate()
                .map(|(j, &wj)| wj * ((j + 1) as f64 / n as f64 - t))
                .sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn weights_match_direct_wls_solve() {
        // Independent oracle: e1' (X'WX)^{-1} X'W with the 2x2 inverse
        // written out by hand.
        let (n, h, t) = (5usize, 0.5, 0.5);
        let w = local_linear_weights(&Kernel::Triweight, t, h, n).unwrap();
        let u: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64 - t).collect();
        let kv: Vec<f64> = u.iter().map(|&x| triweight(x / h)).collect();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0); // X'WX = [[a, b], [b, c]]
        for i in 0..n {
            a += kv[i];
            b += kv[i] * u[i];
            c += kv[i] * u[i] * u[i];
        }
        let det = a * c - b * b;
        for i in 0..n {
            let oracle = kv[i] * (c - b * u[i]) / det;
            assert_abs_diff_eq!(w[i], oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_support_point_is_degenerate() {
        // Only the design point at t itself carries weight: no spread.
        let err = local_linear_weights(&Kernel::Triweight, 0.5, 0.001, 10).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign { .. }));
    }

    #[test]
    fn trimmed_grid_matches_hand_count() {
        let series = series_from_fn(100, 5, |t, _| t);
        let surf = bias_corrected_surface(&series, &Kernel::Triweight, 0.1, (0.0, 1.0)).unwrap();
        let expect: Vec<f64> = (10..=90).map(|j| j as f64 / 100.0).collect();
        assert_eq!(surf.t_grid(), &expect[..]);
        assert_eq!(surf.j_index()[0], 10);
    }

    #[test]
    fn empty_window_is_reported() {
        let series = series_from_fn(50, 4, |t, _| t);
        let err =
            bias_corrected_surface(&series, &Kernel::Triweight, 0.4, (0.0, 0.2)).unwrap_err();
        assert!(matches!(err, Error::EmptyWindow { .. }));
    }

    #[test]
    fn affine_surfaces_are_reproduced_exactly() {
        let series = series_from_fn(200, 7, |t, s| 0.3 + 1.2 * t + 0.5 * s - 0.9 * s * t);
        let surf = bias_corrected_surface(&series, &Kernel::Triweight, 0.15, (0.0, 1.0)).unwrap();
        for (i, &t) in surf.t_grid().iter().enumerate() {
            for (c, &s) in surf.s_grid().iter().enumerate() {
                let truth = 0.3 + 1.2 * t + 0.5 * s - 0.9 * s * t;
                assert_abs_diff_eq!(surf.values()[[i, c]], truth, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn quadratic_bias_matches_kernel_moment() {
        // For mu(t) = t^2 the uncorrected fit at an interior design point has
        // bias S2/S0 -> h^2 * kappa2 with kappa2 = int u^2 K = 1/9 for the
        // triweight; at n = 2000 the discretization correction is ~1e-13.
        let n = 2000usize;
        let x: Vec<f64> = (1..=n).map(|j| (j as f64 / n as f64).powi(2)).collect();
        for &h in &[0.2, 0.1] {
            let w = local_linear_weights(&Kernel::Triweight, 0.5, h, n).unwrap();
            let fitted: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(fitted - 0.25, h * h / 9.0, epsilon = 2e-9);
        }
    }

    #[test]
    fn jackknife_interior_error_is_fourth_order() {
        // The corrected estimator's first surviving interior bias term on a
        // smooth mean is O(h^4): on mu(t) = t^4 halving h divides the error
        // by ~16. Frozen from an independent reference computation:
        // 2.4242e-5 at h = 0.2 and 1.5152e-6 at h = 0.1 (n = 2000, t = 0.5).
        let series = series_from_fn(2000, 3, |t, _| t.powi(4));
        let mut errs = Vec::new();
        for &h in &[0.2, 0.1] {
            let est = bias_corrected_at(&series, &Kernel::Triweight, h, 0.5).unwrap();
            errs.push((est[0] - 0.5f64.powi(4)).abs());
        }
        assert_abs_diff_eq!(errs[0], 2.42424e-5, epsilon = 1e-9);
        assert_abs_diff_eq!(errs[1], 1.51516e-6, epsilon = 1e-9);
        let ratio = errs[0] / errs[1];
        assert!((15.5..=16.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn residual_rows_outside_grid_are_flagged() {
        let series = series_from_fn(100, 5, |t, s| t + s);
        let surf = bias_corrected_surface(&series, &Kernel::Triweight, 0.1, (0.0, 1.0)).unwrap();
        let res = residuals(&series, &surf).unwrap();
        assert_eq!(res.n(), 100);
        // j = 1..9 and 91..100 sit outside [0.1, 0.9].
        for j in 0..100 {
            let expect = !(10..=90).contains(&(j + 1));
            assert_eq!(res.extrapolated()[j], expect, "row {j}");
        }
        // Interior rows of a noiseless affine series have ~zero residuals.
        for j in 20..=80 {
            for v in res.row(j) {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn residuals_reject_foreign_surface() {
        let series = series_from_fn(100, 5, |t, s| t + s);
        let other = series_from_fn(80, 5, |t, s| t + s);
        let surf = bias_corrected_surface(&series, &Kernel::Triweight, 0.1, (0.0, 1.0)).unwrap();
        let err = residuals(&other, &surf).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn subset_weights_agree_with_full_design() {
        let k = Kernel::Triweight;
        let n = 120usize;
        let design: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
        let full = local_linear_weights(&k, 0.4, 0.12, n).unwrap();
        let sub = weights_for_design(&k, 0.4, 0.12, &design).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(full[i], sub[i], epsilon = 1e-12);
        }
    }
}
