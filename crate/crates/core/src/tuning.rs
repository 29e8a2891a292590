//! Bandwidth selection by k-fold cross-validation.
//!
//! The curves are split into `k` contiguous blocks (contiguity respects the
//! serial dependence of the series; shuffled folds would leak neighboring
//! curves into the fit). For every candidate `h` and every fold, the
//! bias-corrected estimator is fitted on the complement design and evaluated
//! at the held-out curves' design points; the score is
//!
//! ```text
//! MSE_h = (1/(1 − h/2)) Σ_folds Σ_{j held out} ∫ (X_j(s) − μ̃^{(fold)}(j/n, s))² ds
//! ```
//!
//! with the integral taken by the trapezoidal rule on the observation grid.
//! A candidate whose design degenerates anywhere is scored `+∞`. Ties —
//! including the all-`∞` case — resolve to the **largest** bandwidth, the
//! smoother choice.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::series::{trapezoid, FunctionalSeries};
use crate::smoother::weights_for_design;

/// Relative tie tolerance: scores within `1e−12` of the total signal energy
/// count as equal (noiseless fits differ only by rounding).
const TIE_REL_TOL: f64 = 1e-12;

/// Outcome of a cross-validation sweep. Serializes with infinite scores
/// (degenerate designs) as JSON `null`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CvReport {
    candidates: Vec<f64>,
    mse: Vec<f64>,
    chosen: f64,
    k: usize,
}

impl CvReport {
    /// Candidate bandwidths, sorted ascending.
    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    /// Cross-validation scores matching [`CvReport::candidates`].
    pub fn mse(&self) -> &[f64] {
        &self.mse
    }

    /// The selected bandwidth.
    pub fn chosen(&self) -> f64 {
        self.chosen
    }

    /// Fold count used.
    pub fn k(&self) -> usize {
        self.k
    }
}

/// Default candidate grid: 10 log-spaced bandwidths spanning
/// `[n^{−1/5}/3, min(n^{−1/5}, 0.499)]` — a third of the canonical rate up
/// to the rate itself, capped below one half.
pub fn default_candidates(n: usize) -> Vec<f64> {
    let rate = (n as f64).powf(-0.2);
    let hi = rate.min(0.499);
    let lo = (rate / 3.0).min(hi);
    let count = 10;
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Contiguous fold boundaries: `k` equal blocks, remainder to the last.
fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    (0..k)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == k { n } else { start + base };
            start..end
        })
        .collect()
}

/// Bias-corrected fit at `t` from the rows in `comp_rows` (0-based) sitting
/// at `design` points. Used per held-out curve during cross-validation.
pub(crate) fn jackknife_fit_on_design(
    series: &FunctionalSeries,
    kernel: &Kernel,
    h: f64,
    comp_rows: &[usize],
    design: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let wide = weights_for_design(kernel, t, h, design)?;
    let narrow = weights_for_design(kernel, t, h * std::f64::consts::FRAC_1_SQRT_2, design)?;
    let mut fit = vec![0.0; series.n_points()];
    for (i, &row) in comp_rows.iter().enumerate() {
        let w = 2.0 * narrow[i] - wide[i];
        if w == 0.0 {
            continue;
        }
        for (f, &x) in fit.iter_mut().zip(series.row(row)) {
            *f += w * x;
        }
    }
    Ok(fit)
}

/// Scores one candidate bandwidth; `None` means a degenerate design
/// somewhere (the candidate is unusable at this sample size).
fn score_candidate(series: &FunctionalSeries, kernel: &Kernel, h: f64, k: usize) -> Result<Option<f64>> {
    let n = series.n();
    let s_grid = series.s_grid();
    let mut total = 0.0;
    let mut sq = vec![0.0; series.n_points()];
    for fold in fold_ranges(n, k) {
        let comp_rows: Vec<usize> = (0..n).filter(|j| !fold.contains(j)).collect();
        let design: Vec<f64> = comp_rows.iter().map(|&j| (j + 1) as f64 / n as f64).collect();
        for j in fold.clone() {
            let t = (j + 1) as f64 / n as f64;
            let fit = match jackknife_fit_on_design(series, kernel, h, &comp_rows, &design, t) {
                Ok(fit) => fit,
                Err(Error::DegenerateDesign { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let row = series.row(j);
            for (i, q) in sq.iter_mut().enumerate() {
                let d = row[i] - fit[i];
                *q = d * d;
            }
            total += trapezoid(s_grid, &sq);
        }
    }
    Ok(Some(total / (1.0 - h / 2.0)))
}

/// Cross-validates the candidate bandwidths and picks the score minimizer,
/// resolving ties to the largest bandwidth.
pub fn cv_bandwidth(
    series: &FunctionalSeries,
    kernel: &Kernel,
    candidates: &[f64],
    k: usize,
) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("cross-validation needs k >= 2 folds, got {k}"),
        });
    }
    if series.n() < 2 * k {
        return Err(Error::TooFewCurves {
            context: format!("{} curves cannot fill {k} folds twice over", series.n()),
        });
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig { reason: "empty candidate list".into() });
    }
    for &h in candidates {
        if !(h > 0.0 && h < 0.5) {
            return Err(Error::InvalidConfig {
                reason: format!("candidate bandwidths must lie in (0, 0.5), got {h}"),
            });
        }
    }
    let mut sorted: Vec<f64> = candidates.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let mse: Vec<f64> = sorted
        .par_iter()
        .map(|&h| score_candidate(series, kernel, h, k).map(|s| s.unwrap_or(f64::INFINITY)))
        .collect::<Result<_>>()?;

    // Tie scale: rounding-level differences relative to the data's energy.
    let energy: f64 = (0..series.n())
        .map(|j| {
            let sq: Vec<f64> = series.row(j).iter().map(|x| x * x).collect();
            trapezoid(series.s_grid(), &sq)
        })
        .sum();
    let min = mse.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_REL_TOL * energy.max(1.0);
    let chosen = sorted
        .iter()
        .zip(&mse)
        .filter(|(_, &s)| s <= min + tol || (s.is_infinite() && min.is_infinite()))
        .map(|(&h, _)| h)
        .last()
        .expect("nonempty candidates");

    Ok(CvReport { candidates: sorted, mse, chosen, k })
}
