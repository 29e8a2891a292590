//! Crate-wide error type.
//!
//! Every fallible operation returns [`enum@Error`]. Variants correspond to the
//! contract violations a caller can actually distinguish and react to;
//! [`Error::slug`] gives a stable machine-readable tag for CLI output.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The weighted local design around an evaluation point has (numerically)
    /// no spread: fewer than two support points, or a collapsed determinant.
    #[error("degenerate local design at t={t}: weighted design determinant {det:.3e} below threshold")]
    DegenerateDesign { t: f64, det: f64 },

    /// The trimmed evaluation window contains no design point.
    #[error("empty evaluation window [{lo}, {hi}]: no design point j/n falls inside")]
    EmptyWindow { lo: f64, hi: f64 },

    /// Two objects that must share a shape (series vs. surface, benchmark vs. grid) do not.
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// The prefix-average benchmark was asked for an empty prefix (floor(x0*n) = 0).
    #[error("empty prefix: floor(x0*n) = 0 for x0={x0}, n={n}")]
    EmptyPrefix { x0: f64, n: usize },

    /// Block lengths violate q > r >= 1 or 2(q+r) < n.
    #[error("invalid blocks: {reason}")]
    InvalidBlocks { reason: String },

    /// The extremal set handed to the bootstrap has no points.
    #[error("empty extremal set: bootstrap statistic undefined")]
    EmptyExtremalSet,

    /// A data-driven selection rule needs more observations than provided.
    #[error("series too short: n={n}, need at least {min}")]
    SeriesTooShort { n: usize, min: usize },

    /// Cross-validation needs at least two curves per fold.
    #[error("too few curves: {context}")]
    TooFewCurves { context: String },

    /// A configuration value is outside its documented domain.
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },

    /// A functional series failed construction (non-finite values, bad grid, bad shape).
    #[error("invalid series: {reason}")]
    InvalidSeries { reason: String },

    /// A user-supplied kernel table failed validation.
    #[error("invalid kernel: {reason}")]
    InvalidKernel { reason: String },

    /// A CSV cell or header could not be parsed. Row/column are 1-based file
    /// positions (row 0 means the header line).
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    /// Fewer than two usable rows remain after the missing-data filter.
    #[error("too few rows: {kept} usable of {total} read")]
    TooFewRows { kept: usize, total: usize },

    /// CSV column headers do not form a strictly increasing numeric grid.
    #[error("non-monotone grid: {context}")]
    NonMonotoneGrid { context: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable kebab-case tag for machine-parseable CLI diagnostics.
    pub fn slug(&self) -> &'static str {
        match self {
            Error::DegenerateDesign { .. } => "degenerate-design",
            Error::EmptyWindow { .. } => "empty-window",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::EmptyPrefix { .. } => "empty-prefix",
            Error::InvalidBlocks { .. } => "invalid-blocks",
            Error::EmptyExtremalSet => "empty-extremal-set",
            Error::SeriesTooShort { .. } => "series-too-short",
            Error::TooFewCurves { .. } => "too-few-curves",
            Error::InvalidConfig { .. } => "invalid-config",
            Error::InvalidSeries { .. } => "invalid-series",
            Error::InvalidKernel { .. } => "invalid-kernel",
            Error::Parse { .. } => "parse-error",
            Error::TooFewRows { .. } => "too-few-rows",
            Error::NonMonotoneGrid { .. } => "non-monotone-grid",
            Error::Io(_) => "io-error",
        }
    }
}
