//! End-to-end inference: from a functional series to a decision about
//! whether its mean has drifted more than a tolerated amount from a
//! benchmark, plus threshold and first-exceedance-time estimates.
//!
//! The pipeline splits into a threshold-independent preparation step
//! ([`PreparedTest::prepare`]: smoothing, benchmark, deviation surface,
//! residuals, bootstrap draws) and a cheap evaluation step
//! ([`PreparedTest::test_at`]) that compares the deviation against a given
//! tolerance `Δ` at a given level `α`. Evaluating many thresholds against
//! one preparation keeps rejections exactly monotone in `Δ`.

use serde::Serialize;

use crate::benchmark::{
    benchmark_fixed, benchmark_initial, benchmark_prefix_mean, BenchmarkEstimate,
};
use crate::bootstrap::{
    bootstrap_draws, bootstrap_quantile, make_blocks, select_block_lengths, BootstrapDraws,
};
use crate::deviation::{default_rho, deviation_surface, extremal_set, DeviationSurface};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::series::FunctionalSeries;
use crate::smoother::{bias_corrected_surface, residuals, MeanSurface};
use crate::tuning::{cv_bandwidth, default_candidates, CvReport};

/// How the smoothing bandwidth is chosen.
#[derive(Debug, Clone)]
pub enum BandwidthSpec {
    /// Use this bandwidth as given (must lie in `(0, 1/2)`).
    Fixed(f64),
    /// Choose by k-fold cross-validation over the default candidate grid.
    CrossValidated,
}

/// Which benchmark curve the running mean is compared against.
#[derive(Debug, Clone)]
pub enum BenchmarkSpec {
    /// Bias-corrected estimate of the mean at the start of the series.
    InitialMean,
    /// Plain average of the curves in the initial window `[0, x0]`, where
    /// `x0` is the lower edge of the evaluation window.
    PrefixMean,
    /// A known benchmark curve on the same grid as the data.
    Fixed(Vec<f64>),
}

/// Everything the pipeline needs to run, with conservative defaults.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub kernel: Kernel,
    pub bandwidth: BandwidthSpec,
    /// Evaluation window `[x0, x1]` in rescaled time.
    pub window: (f64, f64),
    pub benchmark: BenchmarkSpec,
    /// Extremal-set band; `None` uses `0.1·ln(n)/√(nh)`.
    pub rho: Option<f64>,
    /// Block and gap lengths `(q, r)`; `None` selects them from the data.
    pub blocks: Option<(usize, usize)>,
    /// Number of bootstrap draws.
    pub bootstrap_b: usize,
    /// Base seed for the multiplier streams.
    pub seed: u64,
    /// Slack subtracted from `Δ` when counting exceedance times; `None`
    /// uses the extremal-set band default.
    pub delta_n: Option<f64>,
    /// Folds for cross-validated bandwidth selection.
    pub cv_folds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel: Kernel::Triweight,
            bandwidth: BandwidthSpec::CrossValidated,
            window: (0.0, 1.0),
            benchmark: BenchmarkSpec::InitialMean,
            rho: None,
            blocks: None,
            bootstrap_b: 1000,
            seed: 0,
            delta_n: None,
            cv_folds: 10,
        }
    }
}

/// Smoothed fit, benchmark, and deviation surface — the part of the
/// pipeline that needs no bootstrap. Sufficient for surface export and
/// exceedance-time estimation.
#[derive(Debug, Clone)]
pub struct FittedDeviation {
    h: f64,
    cv: Option<CvReport>,
    surface: MeanSurface,
    benchmark: BenchmarkEstimate,
    deviation: DeviationSurface,
}

impl FittedDeviation {
    /// Bandwidth actually used.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Cross-validation report when the bandwidth was data-chosen.
    pub fn cv_report(&self) -> Option<&CvReport> {
        self.cv.as_ref()
    }

    /// Bias-corrected mean surface.
    pub fn surface(&self) -> &MeanSurface {
        &self.surface
    }

    /// Benchmark curve.
    pub fn benchmark(&self) -> &BenchmarkEstimate {
        &self.benchmark
    }

    /// Deviation of the surface from the benchmark.
    pub fn deviation(&self) -> &DeviationSurface {
        &self.deviation
    }
}

/// Fits the mean surface, the benchmark, and their deviation.
pub fn fit_deviation(
    series: &FunctionalSeries,
    config: &PipelineConfig,
) -> Result<FittedDeviation> {
    let (h, cv) = match config.bandwidth {
        BandwidthSpec::Fixed(h) => {
            if !(h.is_finite() && h > 0.0 && h < 0.5) {
                return Err(Error::InvalidConfig {
                    reason: format!("bandwidth must lie in (0, 0.5), got {h}"),
                });
            }
            (h, None)
        }
        BandwidthSpec::CrossValidated => {
            let report = cv_bandwidth(
                series,
                &config.kernel,
                &default_candidates(series.n()),
                config.cv_folds,
            )?;
            (report.chosen(), Some(report))
        }
    };
    let surface = bias_corrected_surface(series, &config.kernel, h, config.window)?;
    let benchmark = match &config.benchmark {
        BenchmarkSpec::InitialMean => benchmark_initial(series, &config.kernel, h)?,
        BenchmarkSpec::PrefixMean => benchmark_prefix_mean(series, config.window.0)?,
        BenchmarkSpec::Fixed(values) => benchmark_fixed(series, values.clone())?,
    };
    let deviation = deviation_surface(&surface, &benchmark)?;
    Ok(FittedDeviation { h, cv, surface, benchmark, deviation })
}

/// A fully prepared test: deviation surface plus bootstrap draws. All the
/// expensive, threshold-independent work lives here.
#[derive(Debug, Clone)]
pub struct PreparedTest {
    n: usize,
    window: (f64, f64),
    benchmark_label: &'static str,
    rho: f64,
    q: usize,
    r: usize,
    delta_n: Option<f64>,
    seed: u64,
    fitted: FittedDeviation,
    draws: BootstrapDraws,
}

impl PreparedTest {
    /// Runs every threshold-independent stage: bandwidth choice, smoothing,
    /// benchmark, deviation, extremal set, residuals, block selection, and
    /// bootstrap draws.
    pub fn prepare(series: &FunctionalSeries, config: &PipelineConfig) -> Result<Self> {
        let fitted = fit_deviation(series, config)?;
        let n = series.n();
        let h = fitted.h;

        let rho = match config.rho {
            Some(r) => r,
            None => default_rho(n, h),
        };
        let ext = extremal_set(&fitted.deviation, rho)?;
        let res = residuals(series, &fitted.surface)?;
        let (q, r) = match config.blocks {
            Some(pair) => pair,
            None => select_block_lengths(&res)?,
        };
        let plan = make_blocks(n, q, r)?;
        let draws = bootstrap_draws(
            &res,
            &ext,
            fitted.deviation.t_grid(),
            &plan,
            &config.kernel,
            h,
            config.bootstrap_b,
            config.seed,
        )?;
        Ok(PreparedTest {
            n,
            window: config.window,
            benchmark_label: fitted.benchmark.kind().label(),
            rho,
            q,
            r,
            delta_n: config.delta_n,
            seed: config.seed,
            fitted,
            draws,
        })
    }

    /// Estimated sup-deviation `d̂∞`.
    pub fn d_inf_hat(&self) -> f64 {
        self.fitted.deviation.sup()
    }

    /// Fitted surfaces and deviation.
    pub fn fitted(&self) -> &FittedDeviation {
        &self.fitted
    }

    /// Bootstrap draws backing every quantile this preparation serves.
    pub fn draws(&self) -> &BootstrapDraws {
        &self.draws
    }

    /// Block and gap lengths `(q, r)` in use.
    pub fn blocks(&self) -> (usize, usize) {
        (self.q, self.r)
    }

    /// Extremal-set band in use.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Largest per-point variance proxy of the bootstrap statistic. When
    /// this falls below `1/ln(n)` the extremal set carries so little noise
    /// that bootstrap quantiles become unreliable; callers should warn.
    pub fn variance_diagnostic(&self) -> f64 {
        self.draws.variance_diagnostic()
    }

    /// Signals that the bootstrap's variance proxy is too small for its
    /// quantiles to be trusted (below `1/ln(n)`).
    pub fn low_variance(&self) -> bool {
        self.variance_diagnostic() < 1.0 / (self.n as f64).ln()
    }

    /// Evaluates the prepared test at tolerance `delta` and level `alpha`.
    pub fn test_at(&self, delta: f64, alpha: f64) -> Result<TestResult> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("tolerance must be finite and >= 0, got {delta}"),
            });
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("level must lie in (0, 1), got {alpha}"),
            });
        }
        let n = self.n;
        let h = self.fitted.h;
        let scale = (n as f64 * h).sqrt();
        let d_inf = self.d_inf_hat();
        let t_stat = scale * (d_inf - delta);
        let quantile = bootstrap_quantile(&self.draws, 1.0 - alpha)?;
        let reject = t_stat > quantile;
        let exceed = self.draws.values().iter().filter(|&&v| v >= t_stat).count();
        let p_value = (1 + exceed) as f64 / (self.draws.b() + 1) as f64;
        let delta_hat = delta_hat_alpha(d_inf, quantile, n, h);
        let delta_n = self.delta_n.unwrap_or_else(|| default_rho(n, h));
        let first_time = first_time_per_s(
            &self.fitted.deviation,
            n,
            self.window.0,
            h,
            delta,
            delta_n,
        )?;
        Ok(TestResult {
            d_inf_hat: d_inf,
            t_stat,
            quantile,
            reject,
            p_value,
            delta_hat_alpha: delta_hat,
            first_time,
            config: RunSummary {
                n,
                h,
                q: self.q,
                r: self.r,
                rho: self.rho,
                bootstrap_b: self.draws.b(),
                alpha,
                delta,
                delta_n,
                window: self.window,
                benchmark: self.benchmark_label,
                seed: self.seed,
            },
        })
    }
}

/// Prepares and evaluates in one call.
pub fn run_test(
    series: &FunctionalSeries,
    config: &PipelineConfig,
    delta: f64,
    alpha: f64,
) -> Result<TestResult> {
    PreparedTest::prepare(series, config)?.test_at(delta, alpha)
}

/// Largest tolerance the level-`α` test would still reject at — equivalently
/// the lower confidence bound `max(0, d̂∞ − q*/√(nh))` for the deviation.
pub fn delta_hat_alpha(d_inf: f64, quantile: f64, n: usize, h: f64) -> f64 {
    (d_inf - quantile / (n as f64 * h).sqrt()).max(0.0)
}

/// Estimated first times at which the deviation's running maximum exceeds
/// the tolerance, per grid point and overall.
#[derive(Debug, Clone, Serialize)]
pub struct FirstTimeResult {
    /// Earliest exceedance over all grid points (`None`: never exceeds).
    pub global: Option<f64>,
    /// Per-grid-point exceedance times (`None`: never exceeds there).
    pub per_s: Vec<Option<f64>>,
    #[serde(skip)]
    pub delta: f64,
    #[serde(skip)]
    pub delta_n: f64,
}

/// Counts, for each grid point `s`, how long the running maximum of
/// `|d̂(·, s)|` stays below `Δ − δ_n`:
/// `t̂*(s) = (x0 ∨ h) + (1/n) · #{grid times y : max_{t ≤ y} |d̂(t,s)| < Δ − δ_n}`.
///
/// A point whose running maximum never reaches `Δ − δ_n` by the end of the
/// window has no exceedance time (`None`), not a clamped one. Every finite
/// time lies in `[x0 ∨ h, x1 ∧ (1−h) + 1/n]`, and times are monotone in `Δ`.
pub fn first_time_per_s(
    dev: &DeviationSurface,
    n: usize,
    x0: f64,
    h: f64,
    delta: f64,
    delta_n: f64,
) -> Result<FirstTimeResult> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidConfig {
            reason: format!("tolerance must be finite and >= 0, got {delta}"),
        });
    }
    if !(delta_n.is_finite() && delta_n >= 0.0) {
        return Err(Error::InvalidConfig {
            reason: format!("exceedance slack must be finite and >= 0, got {delta_n}"),
        });
    }
    let lo = x0.max(h);
    let threshold = delta - delta_n;
    let n_t = dev.t_grid().len();
    let n_s = dev.s_grid().len();
    let values = dev.values();
    let mut per_s = Vec::with_capacity(n_s);
    for si in 0..n_s {
        let mut running = 0.0f64;
        let mut below = 0usize;
        for ti in 0..n_t {
            running = running.max(values[[ti, si]].abs());
            if running < threshold {
                below += 1;
            }
        }
        per_s.push(if running >= threshold {
            Some(lo + below as f64 / n as f64)
        } else {
            None
        });
    }
    let global = per_s
        .iter()
        .flatten()
        .copied()
        .min_by(|a, b| a.total_cmp(b));
    Ok(FirstTimeResult { global, per_s, delta, delta_n })
}

/// Full outcome of one test evaluation. Serializes to a stable JSON shape:
/// `d_inf`, `T`, `quantile`, `reject`, `p_value`, `delta_hat_alpha`,
/// `first_time {global, per_s}`, `config`.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    #[serde(rename = "d_inf")]
    pub d_inf_hat: f64,
    #[serde(rename = "T")]
    pub t_stat: f64,
    pub quantile: f64,
    pub reject: bool,
    pub p_value: f64,
    pub delta_hat_alpha: f64,
    pub first_time: FirstTimeResult,
    pub config: RunSummary,
}

/// Echo of the resolved run parameters, embedded in every result.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub n: usize,
    pub h: f64,
    pub q: usize,
    pub r: usize,
    pub rho: f64,
    pub bootstrap_b: usize,
    pub alpha: f64,
    pub delta: f64,
    pub delta_n: f64,
    pub window: (f64, f64),
    pub benchmark: &'static str,
    pub seed: u64,
}
