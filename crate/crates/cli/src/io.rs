//! CSV and JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use perlat::curve::SummaryCurve;
use perlat::estimators::{Histogram, ScatteringSpectrum};
use perlat::{BoxWindow, PointPattern};
use serde::Serialize;

use crate::error::{CliError, CliResult};

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn coordinate_header(dim: usize) -> CliResult<Vec<&'static str>> {
    if !(1..=3).contains(&dim) {
        return Err(CliError::config(format!("dimension must be 1, 2 or 3, got {dim}")));
    }
    Ok(AXES[..dim].to_vec())
}

/// Sidecar window file next to a point CSV: `points.csv` -> `points.window.json`.
pub fn window_sidecar(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("window.json")
}

fn csv_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_window(path: &Path) -> CliResult<BoxWindow> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let w: BoxWindow =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    w.validate()?;
    Ok(w)
}

/// Reads a point CSV with header `x[,y[,z]]`. The window is `window` if
/// given, else the sidecar file if present, else the bounding box.
pub fn ingest_csv(path: &Path, dim: usize, window: Option<BoxWindow>) -> CliResult<PointPattern> {
    let header = coordinate_header(dim)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e.to_string()))?;
    let got: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(csv_error(
            path,
            format!("header `{}` does not match `{}` for dimension {dim}", got.join(","), header.join(",")),
        ));
    }
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_error(path, format!("row {row}: {e}")))?;
        if rec.len() != dim {
            return Err(csv_error(path, format!("row {row}: expected {dim} fields, got {}", rec.len())));
        }
        let p = rec
            .iter()
            .map(|f| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| csv_error(path, format!("row {row}: cannot parse `{f}`")))?;
                if !v.is_finite() {
                    return Err(csv_error(path, format!("row {row}: non-finite coordinate `{f}`")));
                }
                Ok(v)
            })
            .collect::<CliResult<Vec<f64>>>()?;
        points.push(p);
    }
    let window = match window {
        Some(w) => w,
        None if window_sidecar(path).exists() => read_window(&window_sidecar(path))?,
        None => bounding_box(path, dim, &points)?,
    };
    if window.dim() != dim {
        return Err(CliError::config(format!("window has dimension {}, expected {dim}", window.dim())));
    }
    if let Some(i) = points.iter().position(|p| !window.contains(p)) {
        return Err(csv_error(path, format!("row {}: point lies outside the window", i + 2)));
    }
    Ok(PointPattern::new(window, points)?)
}

fn bounding_box(path: &Path, dim: usize, points: &[Vec<f64>]) -> CliResult<BoxWindow> {
    if points.len() < 2 {
        return Err(csv_error(path, "cannot infer a window from fewer than 2 points"));
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    BoxWindow::new(lo, hi).map_err(|e| csv_error(path, format!("inferred window: {e}")))
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e.to_string()))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e.to_string()))?;
    for row in rows {
        let fields: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
        w.write_record(&fields).map_err(|e| csv_error(path, e.to_string()))?;
    }
    w.flush().map_err(io_error(path))
}

pub fn write_points(path: &Path, p: &PointPattern) -> CliResult<()> {
    let header = coordinate_header(p.dim())?;
    write_rows(path, &header, p.points().map(|x| x.to_vec()))?;
    write_json(&window_sidecar(path), p.window())
}

pub fn write_curve(path: &Path, c: &SummaryCurve) -> CliResult<()> {
    write_rows(path, &["r", "value"], c.iter().map(|(r, v)| [r, v]))
}

/// Several columns sharing the `r` column.
pub fn write_table(path: &Path, header: &[&str], columns: &[&[f64]]) -> CliResult<()> {
    let n = columns.first().map_or(0, |c| c.len());
    write_rows(path, header, (0..n).map(|i| columns.iter().map(|c| c[i]).collect::<Vec<_>>()))
}

pub fn write_spectrum(path: &Path, s: &ScatteringSpectrum) -> CliResult<()> {
    let norms = s.k_norms();
    write_rows(
        path,
        &["kx", "ky", "kz", "k_norm", "S"],
        s.wavevectors.iter().zip(&norms).zip(&s.intensities).map(|((k, &n), &v)| {
            let mut row: Vec<f64> = (0..3).map(|i| k.get(i).copied().unwrap_or(0.0)).collect();
            row.push(n);
            row.push(v);
            row
        }),
    )
}

pub fn write_histogram(path: &Path, h: &Histogram) -> CliResult<()> {
    write_rows(path, &["bin_lo", "bin_hi", "count"], h.rows().map(|(a, b, c)| [a, b, c]))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_error(path))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_error(path))
}
