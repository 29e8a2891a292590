//! Command-line interface for the functional drift detector.
//!
//! Subcommands mirror the pipeline: `test` runs the full bootstrap test,
//! `first-time` estimates exceedance times without any bootstrap,
//! `bandwidth` reports the cross-validation sweep, `simulate` runs
//! Monte-Carlo rejection studies on the reference surfaces, and `surface`
//! exports the fitted deviation for plotting.
//!
//! Every run with a fixed `--seed` is byte-identical across invocations and
//! thread counts. Errors print one machine-parseable line
//! `error: <slug>: <message>` on standard error and exit with code 1 (clap
//! usage errors keep their conventional code 2).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fundrift::deviation::default_rho;
use fundrift::dgp::{rejection_study, ErrorKind, MeanKind, StudySpec};
use fundrift::inference::{fit_deviation, first_time_per_s};
use fundrift::io::{
    load_csv, write_study_csv, write_surface_csv, write_times_csv, InputFormat, LoadedSeries,
};
use fundrift::tuning::{cv_bandwidth, default_candidates};
use fundrift::{
    BandwidthSpec, BenchmarkSpec, Error, Kernel, PipelineConfig, PreparedTest, Result,
};

#[derive(Parser)]
#[command(
    name = "fundrift",
    version,
    about = "Detect gradual sup-norm drift in the mean of a functional time series"
)]
struct Cli {
    /// Worker threads (overrides FUNDRIFT_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether the mean drifts more than Δ from the benchmark.
    Test(TestArgs),
    /// Estimate when each location's deviation first exceeded Δ.
    FirstTime(FirstTimeArgs),
    /// Report the bandwidth cross-validation sweep.
    Bandwidth(BandwidthArgs),
    /// Run a Monte-Carlo rejection study on a reference surface.
    Simulate(SimulateArgs),
    /// Export the fitted surface, benchmark, and deviation as CSV.
    Surface(SurfaceArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV path (wide: `label` column + numeric grid headers).
    #[arg(long)]
    input: PathBuf,
    /// Read `label,s,value` triples instead of wide rows.
    #[arg(long)]
    long: bool,
}

impl InputArgs {
    fn load(&self) -> Result<LoadedSeries> {
        let format = if self.long { InputFormat::Long } else { InputFormat::Wide };
        let loaded = load_csv(&self.input, format)?;
        if !loaded.dropped.is_empty() {
            eprintln!(
                "note: dropped {} of {} rows with more than 10% missing cells: {}",
                loaded.dropped.len(),
                loaded.total_rows,
                loaded.dropped.join(", ")
            );
        }
        Ok(loaded)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BenchmarkArg {
    /// Bias-corrected estimate of the mean at the start of the series.
    Initial,
    /// Plain average of the curves with j/n ≤ x0.
    PrefixMean,
}

impl From<BenchmarkArg> for BenchmarkSpec {
    fn from(arg: BenchmarkArg) -> Self {
        match arg {
            BenchmarkArg::Initial => BenchmarkSpec::InitialMean,
            BenchmarkArg::PrefixMean => BenchmarkSpec::PrefixMean,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Benchmark the deviation is measured against.
    #[arg(long, value_enum, default_value = "initial")]
    benchmark: BenchmarkArg,
    /// Lower edge of the evaluation window.
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Upper edge of the evaluation window.
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    /// Bandwidth in (0, 0.5), or `cv` for cross-validation.
    #[arg(long, default_value = "cv", value_parser = parse_bandwidth)]
    bandwidth: BandwidthSpec,
}

impl FitArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            bandwidth: self.bandwidth.clone(),
            window: (self.x0, self.x1),
            benchmark: self.benchmark.into(),
            ..PipelineConfig::default()
        }
    }
}

fn parse_bandwidth(raw: &str) -> std::result::Result<BandwidthSpec, String> {
    if raw == "cv" {
        return Ok(BandwidthSpec::CrossValidated);
    }
    raw.parse::<f64>()
        .map(BandwidthSpec::Fixed)
        .map_err(|_| format!("expected a number or `cv`, got {raw:?}"))
}

#[derive(Copy, Clone, Debug)]
enum BlocksArg {
    Auto,
    Fixed(usize, usize),
}

fn parse_blocks(raw: &str) -> std::result::Result<BlocksArg, String> {
    if raw == "auto" {
        return Ok(BlocksArg::Auto);
    }
    let err = || format!("expected `auto` or `Q,R` with integers Q > R >= 1, got {raw:?}");
    let (q, r) = raw.split_once(',').ok_or_else(err)?;
    Ok(BlocksArg::Fixed(
        q.trim().parse().map_err(|_| err())?,
        r.trim().parse().map_err(|_| err())?,
    ))
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Tolerated sup-deviation Δ; the test asks whether the true deviation
    /// exceeds it.
    #[arg(long)]
    delta: f64,
    /// Test level α.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Block and gap lengths `Q,R`, or `auto` to select from the data.
    #[arg(long, default_value = "auto", value_parser = parse_blocks)]
    blocks: BlocksArg,
    /// Near-maximum band ρ for the extremal set
    /// (default 0.1·ln(n)/√(nh)).
    #[arg(long)]
    rho: Option<f64>,
    /// Number of bootstrap draws.
    #[arg(long = "boot", default_value_t = 1000)]
    boot: usize,
    /// Seed for the bootstrap multiplier streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FirstTimeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Tolerated sup-deviation Δ.
    #[arg(long)]
    delta: f64,
    /// Slack subtracted from Δ when counting exceedances
    /// (default 0.1·ln(n)/√(nh)).
    #[arg(long = "delta-n")]
    delta_n: Option<f64>,
    /// Output JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-location times as CSV `s,t_star` here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BandwidthArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Candidate bandwidths (default: 10 log-spaced around n^{-1/5}).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Output JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MeanArg {
    Mu1,
    Mu2,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ErrorsArg {
    Iid,
    Ma,
}

#[derive(Args)]
struct SimulateArgs {
    /// Reference mean surface.
    #[arg(long, value_enum)]
    mean: MeanArg,
    /// Error process.
    #[arg(long, value_enum)]
    errors: ErrorsArg,
    /// Curves per replication.
    #[arg(long)]
    n: usize,
    /// Grid points per curve.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Monte-Carlo replications.
    #[arg(long)]
    reps: usize,
    /// Tolerances to test, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    deltas: Vec<f64>,
    /// Test level α.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Bootstrap draws per replication.
    #[arg(long = "boot", default_value_t = 200)]
    boot: usize,
    /// Base seed; each replication derives its own data and bootstrap seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    init_threads(cli.threads);
    if let Err(err) = run(cli.command) {
        eprintln!("error: {}: {err}", err.slug());
        std::process::exit(1);
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("FUNDRIFT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        // Ignore "already initialized": only the first call can win.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Test(args) => run_test_cmd(args),
        Command::FirstTime(args) => run_first_time(args),
        Command::Bandwidth(args) => run_bandwidth(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Surface(args) => run_surface(args),
    }
}

/// Writes pretty JSON (plus a trailing newline) to the path or stdout.
fn emit_json<T: serde::Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let mut writer = open_sink(out)?;
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

fn open_sink(out: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn run_test_cmd(args: TestArgs) -> Result<()> {
    let loaded = args.input.load()?;
    let mut config = args.fit.config();
    config.rho = args.rho;
    config.blocks = match args.blocks {
        BlocksArg::Auto => None,
        BlocksArg::Fixed(q, r) => Some((q, r)),
    };
    config.bootstrap_b = args.boot;
    config.seed = args.seed;
    let prepared = PreparedTest::prepare(&loaded.series, &config)?;
    if prepared.low_variance() {
        eprintln!(
            "warning: low-variance-bootstrap: largest per-point bootstrap variance {:.3e} \
             is below 1/ln(n); the extremal set carries too little noise and quantiles \
             may be unreliable",
            prepared.variance_diagnostic()
        );
    }
    let result = prepared.test_at(args.delta, args.alpha)?;
    emit_json(&result, args.out.as_ref())
}

fn run_first_time(args: FirstTimeArgs) -> Result<()> {
    let loaded = args.input.load()?;
    let fitted = fit_deviation(&loaded.series, &args.fit.config())?;
    let n = loaded.series.n();
    let delta_n = args
        .delta_n
        .unwrap_or_else(|| default_rho(n, fitted.h()));
    let times = first_time_per_s(
        fitted.deviation(),
        n,
        args.fit.x0,
        fitted.h(),
        args.delta,
        delta_n,
    )?;
    if let Some(path) = &args.csv {
        let file = BufWriter::new(File::create(path)?);
        write_times_csv(fitted.deviation().s_grid(), &times.per_s, file)?;
    }
    emit_json(&times, args.out.as_ref())
}

fn run_bandwidth(args: BandwidthArgs) -> Result<()> {
    let loaded = args.input.load()?;
    let candidates = match args.grid {
        Some(grid) => grid,
        None => default_candidates(loaded.series.n()),
    };
    let report = cv_bandwidth(&loaded.series, &Kernel::Triweight, &candidates, args.folds)?;
    emit_json(&report, args.out.as_ref())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let spec = StudySpec {
        mean: match args.mean {
            MeanArg::Mu1 => MeanKind::Mu1,
            MeanArg::Mu2 => MeanKind::Mu2,
        },
        errors: match args.errors {
            ErrorsArg::Iid => ErrorKind::IidBridge,
            ErrorsArg::Ma => ErrorKind::MaBridge,
        },
        n: args.n,
        n_points: args.points,
        deltas: args.deltas.clone(),
        alpha: args.alpha,
        reps: args.reps,
        bootstrap_b: args.boot,
        seed: args.seed,
    };
    let rows = rejection_study(&spec)?;
    let sink = open_sink(args.out.as_ref())?;
    write_study_csv(&spec, &rows, sink)
}

fn run_surface(args: SurfaceArgs) -> Result<()> {
    let loaded = args.input.load()?;
    let fitted = fit_deviation(&loaded.series, &args.fit.config())?;
    let sink = open_sink(args.out.as_ref())?;
    write_surface_csv(&fitted, sink)
}
