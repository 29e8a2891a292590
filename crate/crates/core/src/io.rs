//! CSV ingestion and result serialization.
//!
//! Input curves arrive as wide CSV (one row per curve, first column a label,
//! remaining headers the numeric sampling grid) or as long `label,s,value`
//! triples. Rows with more than 10% missing cells are dropped; remaining
//! gaps are filled by natural cubic spline interpolation along the row, with
//! linear extrapolation past the first/last observed cell. The grid is
//! affinely rescaled to `[0,1]`.
//!
//! Output writers produce the study, surface, and exceedance-time CSVs with
//! shortest-roundtrip float formatting, so a written file re-reads to
//! bit-identical values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dgp::{StudyRow, StudySpec};
use crate::error::{Error, Result};
use crate::inference::FittedDeviation;
use crate::series::FunctionalSeries;

/// Layout of an input CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// One row per curve; first column `label`, remaining headers the grid.
    Wide,
    /// `label,s,value` triples; curves ordered by first appearance.
    Long,
}

/// A loaded series plus what the missing-data policy did.
#[derive(Debug)]
pub struct LoadedSeries {
    pub series: FunctionalSeries,
    /// Labels of rows dropped for exceeding 10% missing cells.
    pub dropped: Vec<String>,
    /// Rows read before the missing-data filter.
    pub total_rows: usize,
}

/// Reads a CSV file into a functional series.
pub fn load_csv(path: &Path, format: InputFormat) -> Result<LoadedSeries> {
    let file = File::open(path)?;
    read_csv(BufReader::new(file), format)
}

/// Reads CSV content from any reader; see the module docs for the layout
/// and missing-data rules.
pub fn read_csv(reader: impl Read, format: InputFormat) -> Result<LoadedSeries> {
    match format {
        InputFormat::Wide => read_wide(reader),
        InputFormat::Long => read_long(reader),
    }
}

fn parse_cell(raw: &str, row: usize, col: usize) -> Result<Option<f64>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Parse {
            row,
            col,
            msg: format!("expected a finite number, got {trimmed:?}"),
        })
}

fn csv_error(err: csv::Error) -> Error {
    Error::Parse {
        row: err
            .position()
            .map(|p| p.record() as usize)
            .unwrap_or(0),
        col: 0,
        msg: err.to_string(),
    }
}

fn read_wide(reader: impl Read) -> Result<LoadedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() < 3 {
        return Err(Error::NonMonotoneGrid {
            context: format!(
                "need a label column plus at least 2 grid columns, got {} columns",
                headers.len()
            ),
        });
    }
    let mut grid = Vec::with_capacity(headers.len() - 1);
    for (i, cell) in headers.iter().enumerate().skip(1) {
        match parse_cell(cell, 0, i + 1)? {
            Some(v) => grid.push(v),
            None => {
                return Err(Error::Parse {
                    row: 0,
                    col: i + 1,
                    msg: "empty grid header".into(),
                })
            }
        }
    }

    let mut labels = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row_no = idx + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: row_no,
                col: 0,
                msg: format!(
                    "row has {} cells, header has {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        labels.push(record.get(0).unwrap_or("").to_string());
        let mut cells = Vec::with_capacity(grid.len());
        for (i, cell) in record.iter().enumerate().skip(1) {
            cells.push(parse_cell(cell, row_no, i + 1)?);
        }
        rows.push(cells);
    }
    assemble(labels, grid, rows)
}

fn read_long(reader: impl Read) -> Result<LoadedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    // Triples in file order; grid = sorted distinct s.
    let mut triples: Vec<(String, f64, Option<f64>)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row_no = idx + 1;
        if record.len() != 3 {
            return Err(Error::Parse {
                row: row_no,
                col: 0,
                msg: format!("expected label,s,value triples, got {} cells", record.len()),
            });
        }
        let s = parse_cell(record.get(1).unwrap_or(""), row_no, 2)?.ok_or(Error::Parse {
            row: row_no,
            col: 2,
            msg: "missing grid position".into(),
        })?;
        let value = parse_cell(record.get(2).unwrap_or(""), row_no, 3)?;
        triples.push((record.get(0).unwrap_or("").to_string(), s, value));
    }

    let mut grid: Vec<f64> = triples.iter().map(|t| t.1).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, (label, s, value)) in triples.iter().enumerate() {
        let row = match labels.iter().position(|l| l == label) {
            Some(r) => r,
            None => {
                labels.push(label.clone());
                rows.push(vec![None; grid.len()]);
                rows.len() - 1
            }
        };
        let col = grid.partition_point(|&g| g < *s);
        if value.is_some() && rows[row][col].is_some() {
            return Err(Error::Parse {
                row: idx + 1,
                col: 2,
                msg: format!("duplicate value for label {label:?} at s={s}"),
            });
        }
        if value.is_some() {
            rows[row][col] = *value;
        }
    }
    assemble(labels, grid, rows)
}

/// Applies the grid rescale and missing-data policy, then builds the series.
fn assemble(
    labels: Vec<String>,
    grid: Vec<f64>,
    rows: Vec<Vec<Option<f64>>>,
) -> Result<LoadedSeries> {
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotoneGrid {
                context: format!("grid columns not strictly increasing: {} then {}", w[0], w[1]),
            });
        }
    }
    if grid.len() < 2 {
        return Err(Error::NonMonotoneGrid {
            context: format!("need at least 2 grid columns, got {}", grid.len()),
        });
    }
    let lo = grid[0];
    let span = grid[grid.len() - 1] - lo;
    let grid: Vec<f64> = grid.iter().map(|&g| (g - lo) / span).collect();
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotoneGrid {
                context: "grid columns collapse after rescaling to [0,1]".into(),
            });
        }
    }

    let n_cols = grid.len();
    let total_rows = rows.len();
    let mut kept_labels = Vec::new();
    let mut kept_rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (label, cells) in labels.into_iter().zip(rows) {
        let missing = cells.iter().filter(|c| c.is_none()).count();
        // Strictly more than 10% missing: drop the whole row.
        if 10 * missing > n_cols {
            dropped.push(label);
            continue;
        }
        kept_labels.push(label);
        kept_rows.push(if missing == 0 {
            cells.into_iter().map(Option::unwrap).collect()
        } else {
            fill_missing(&grid, &cells)
        });
    }
    if kept_rows.len() < 2 {
        return Err(Error::TooFewRows { kept: kept_rows.len(), total: total_rows });
    }

    let n = kept_rows.len();
    let mut values = Array2::zeros((n, n_cols));
    for (j, row) in kept_rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            values[[j, i]] = v;
        }
    }
    let series = FunctionalSeries::new(values, grid, Some(kept_labels))?;
    Ok(LoadedSeries { series, dropped, total_rows })
}

/// Fills the `None` cells of one row by a natural cubic spline through the
/// observed cells, extrapolating linearly (with the spline's boundary
/// slope) before the first and after the last observation. With exactly two
/// observations the spline degenerates to the chord.
fn fill_missing(grid: &[f64], cells: &[Option<f64>]) -> Vec<f64> {
    let knots: Vec<(f64, f64)> = grid
        .iter()
        .zip(cells)
        .filter_map(|(&x, c)| c.map(|y| (x, y)))
        .collect();
    debug_assert!(knots.len() >= 2, "missing-data rule keeps at least 90% of cells");
    let spline = NaturalSpline::fit(&knots);
    grid.iter()
        .zip(cells)
        .map(|(&x, c)| c.unwrap_or_else(|| spline.eval(x)))
        .collect()
}

/// Natural cubic spline: second derivative zero at both ends, linear
/// extension outside the knot range.
struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    fn fit(knots: &[(f64, f64)]) -> Self {
        let k = knots.len();
        let x: Vec<f64> = knots.iter().map(|p| p.0).collect();
        let y: Vec<f64> = knots.iter().map(|p| p.1).collect();
        let mut m = vec![0.0; k];
        if k > 2 {
            // Tridiagonal system for the interior second derivatives
            // (Thomas algorithm); natural ends pin m[0] = m[k-1] = 0.
            let unknowns = k - 2;
            let mut diag = vec![0.0; unknowns];
            let mut upper = vec![0.0; unknowns];
            let mut rhs = vec![0.0; unknowns];
            for i in 0..unknowns {
                let h_prev = x[i + 1] - x[i];
                let h_next = x[i + 2] - x[i + 1];
                diag[i] = (h_prev + h_next) / 3.0;
                upper[i] = h_next / 6.0;
                rhs[i] = (y[i + 2] - y[i + 1]) / h_next - (y[i + 1] - y[i]) / h_prev;
            }
            // Forward sweep: lower diagonal equals its row's h_prev / 6.
            for i in 1..unknowns {
                let lower = (x[i + 1] - x[i]) / 6.0;
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[unknowns] = rhs[unknowns - 1] / diag[unknowns - 1];
            for i in (0..unknowns - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        NaturalSpline { x, y, m }
    }

    fn eval(&self, at: f64) -> f64 {
        let k = self.x.len();
        let (x, y, m) = (&self.x, &self.y, &self.m);
        if at <= x[0] {
            let h = x[1] - x[0];
            let slope = (y[1] - y[0]) / h - h * m[1] / 6.0;
            return y[0] + slope * (at - x[0]);
        }
        if at >= x[k - 1] {
            let h = x[k - 1] - x[k - 2];
            let slope = (y[k - 1] - y[k - 2]) / h + h * m[k - 2] / 6.0;
            return y[k - 1] + slope * (at - x[k - 1]);
        }
        let i = self.x.partition_point(|&v| v <= at) - 1;
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - at) / h;
        let b = (at - x[i]) / h;
        a * y[i]
            + b * y[i + 1]
            + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
    }
}

/// Writes a series as wide CSV (inverse of the wide reader). Unnamed curves
/// get their 1-based index as the label.
pub fn write_csv(series: &FunctionalSeries, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend(series.s_grid().iter().map(|s| format!("{s}")));
    wtr.write_record(&header).map_err(csv_error)?;
    for j in 0..series.n() {
        let label = match series.labels() {
            Some(l) => l[j].clone(),
            None => (j + 1).to_string(),
        };
        let mut record = vec![label];
        record.extend(series.row(j).iter().map(|v| format!("{v}")));
        wtr.write_record(&record).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a series to a file as wide CSV.
pub fn write_csv_path(series: &FunctionalSeries, path: &Path) -> Result<()> {
    write_csv(series, BufWriter::new(File::create(path)?))
}

/// Writes the Monte-Carlo study table:
/// `mean,errors,n,delta,alpha,reps,bootstrap_B,rejection_rate`.
pub fn write_study_csv(
    spec: &StudySpec,
    rows: &[StudyRow],
    mut writer: impl Write,
) -> Result<()> {
    writeln!(writer, "mean,errors,n,delta,alpha,reps,bootstrap_B,rejection_rate")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            spec.mean.label(),
            spec.errors.label(),
            spec.n,
            row.delta,
            spec.alpha,
            spec.reps,
            spec.bootstrap_b,
            row.rejection_rate
        )?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the plot-ready deviation table: `t,s,mu_tilde,g_hat,deviation`,
/// time-major.
pub fn write_surface_csv(fitted: &FittedDeviation, mut writer: impl Write) -> Result<()> {
    writeln!(writer, "t,s,mu_tilde,g_hat,deviation")?;
    let surface = fitted.surface();
    let bench = fitted.benchmark().values();
    let dev = fitted.deviation();
    for (ti, &t) in surface.t_grid().iter().enumerate() {
        let fit_row = surface.row(ti);
        let dev_row = dev.row(ti);
        for (si, &s) in surface.s_grid().iter().enumerate() {
            writeln!(
                writer,
                "{t},{s},{},{},{}",
                fit_row[si], bench[si], dev_row[si]
            )?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes per-location exceedance times: `s,t_star`, empty time for
/// locations whose deviation never reaches the tolerance.
pub fn write_times_csv(
    s_grid: &[f64],
    per_s: &[Option<f64>],
    mut writer: impl Write,
) -> Result<()> {
    writeln!(writer, "s,t_star")?;
    for (&s, t) in s_grid.iter().zip(per_s) {
        match t {
            Some(t) => writeln!(writer, "{s},{t}")?,
            None => writeln!(writer, "{s},")?,
        }
    }
    writer.flush()?;
    Ok(())
}
