//! Detection of gradual, practically relevant changes in the mean of a
//! functional time series.
//!
//! Given curves `X_1, …, X_n` observed on a common grid, the library
//! estimates the time-varying mean surface by bias-corrected local linear
//! smoothing, measures its largest absolute deviation from a benchmark
//! curve (`d̂∞`), and tests whether the true deviation exceeds a tolerance
//! `Δ` chosen by the practitioner. Critical values come from a Gaussian
//! multiplier block bootstrap evaluated only on the near-argmax set of the
//! deviation, which keeps the test honest when the maximum is attained on a
//! thin set. On rejection, the pipeline also reports the largest tolerance
//! that would still be rejected (`Δ̂α`) and the first time each location's
//! deviation exceeded the tolerance.
//!
//! Modules follow the pipeline:
//! - [`series`]: validated curve container;
//! - [`kernels`]: smoothing kernels and their bias-corrected forms;
//! - [`smoother`]: local linear surface fits and residuals;
//! - [`benchmark`]: initial-mean, prefix-average, and fixed benchmarks;
//! - [`deviation`]: deviation surface, supremum, extremal sets;
//! - [`bootstrap`]: block multiplier bootstrap and quantiles;
//! - [`tuning`]: cross-validated bandwidth selection;
//! - [`inference`]: the prepared test, decisions, `Δ̂α`, exceedance times;
//! - [`dgp`]: reference surfaces, noise processes, Monte-Carlo studies;
//! - [`io`]: CSV ingestion with the missing-data policy, result writers.

pub mod benchmark;
pub mod bootstrap;
pub mod deviation;
pub mod dgp;
pub mod error;
pub mod inference;
pub mod io;
pub mod kernels;
mod seeding;
pub mod series;
pub mod smoother;
pub mod tuning;

pub use error::{Error, Result};
pub use inference::{
    run_test, BandwidthSpec, BenchmarkSpec, PipelineConfig, PreparedTest, TestResult,
};
pub use kernels::Kernel;
pub use series::FunctionalSeries;
