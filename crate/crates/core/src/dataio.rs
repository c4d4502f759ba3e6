//! CSV ingestion/export, train/test splitting and feature construction.
//!
//! Dataset files have a header row with an optional `t` column, a `y` column
//! and one column per coordinate of `u_t` (conventionally `u_1 .. u_n`). An
//! empty `y` cell (or `nan`/`NaN`) marks a missing observation. Lines starting
//! with `#` are comments.
//!
//! When `t` is present its values are the rows' time indices; a file whose
//! first `t` is below 1 is shifted so that it starts at 1.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::RegressionDataset;

fn parse_error(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: source.to_string(), line, message: message.into() }
}

/// Reads a dataset file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<RegressionDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv_from(file, &path.display().to_string())
}

/// Reads a dataset from any reader; `source` labels diagnostics.
pub fn read_csv_from<R: Read>(reader: R, source: &str) -> Result<RegressionDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_error(source, 1, format!("cannot read header: {e}")))?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    let t_col = names.iter().position(|h| h == "t");
    let y_col = names
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| parse_error(source, 1, "header has no 'y' column"))?;
    let u_cols: Vec<usize> = (0..names.len()).filter(|&i| Some(i) != t_col && i != y_col).collect();
    if u_cols.is_empty() {
        return Err(parse_error(source, 1, "header has no observation-vector columns"));
    }

    let mut times: Vec<i64> = Vec::new();
    let mut y = Vec::new();
    let mut observed = Vec::new();
    let mut u_values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(source, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != names.len() {
            return Err(parse_error(source, line, format!("expected {} fields, found {}", names.len(), record.len())));
        }
        if let Some(tc) = t_col {
            let t: i64 = record[tc]
                .parse()
                .map_err(|_| parse_error(source, line, format!("invalid t value '{}'", &record[tc])))?;
            if times.last().is_some_and(|&prev| t <= prev) {
                return Err(parse_error(source, line, "t values must be strictly increasing"));
            }
            times.push(t);
        }
        let cell = &record[y_col];
        if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
            y.push(f64::NAN);
            observed.push(false);
        } else {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(source, line, format!("invalid y value '{cell}'")))?;
            if !v.is_finite() {
                return Err(parse_error(source, line, format!("non-finite y value '{cell}'")));
            }
            y.push(v);
            observed.push(true);
        }
        for &c in &u_cols {
            let cell = &record[c];
            if cell.is_empty() {
                return Err(parse_error(source, line, format!("missing value in column '{}'", &headers[c])));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(source, line, format!("invalid value '{cell}' in column '{}'", &headers[c])))?;
            u_values.push(v);
        }
    }
    let rows = y.len();
    let u = DMatrix::from_row_slice(rows, u_cols.len(), &u_values);
    let result = match times.first() {
        Some(&first) => {
            let shift = if first < 1 { 1 - first } else { 0 };
            let times = times.iter().map(|&t| (t + shift) as usize).collect();
            RegressionDataset::with_times(u, y, observed, times)
        }
        None => RegressionDataset::new(u, y, observed),
    };
    result.map_err(|e| parse_error(source, 0, e.to_string()))
}

/// Writes `dataset` in the dataset format, with an optional leading comment.
pub fn write_csv<W: Write>(dataset: &RegressionDataset, writer: W, comment: Option<&str>) -> Result<()> {
    let mut writer = writer;
    if let Some(c) = comment {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let n = dataset.dim();
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend((1..=n).map(|j| format!("u_{j}")));
    w.write_record(&header)?;
    for t in 0..dataset.horizon() {
        let mut row = vec![dataset.times()[t].to_string()];
        row.push(if dataset.observed()[t] { dataset.y()[t].to_string() } else { String::new() });
        row.extend(dataset.u().row(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(dataset: &RegressionDataset, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(dataset, file, comment)
}

/// Rows `(1, v_t, v_t^2)`; every row has norm at least one.
pub fn quadratic_features(v: &[f64]) -> Result<DMatrix<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("feature series contains non-finite values"));
    }
    let mut m = DMatrix::zeros(v.len(), 3);
    for (t, &x) in v.iter().enumerate() {
        m[(t, 0)] = 1.0;
        m[(t, 1)] = x;
        m[(t, 2)] = x * x;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scale {
    pub mean: f64,
    pub std: f64,
}

impl Scale {
    fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Location/scale fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationParams {
    pub y: Scale,
    /// `None` for constant columns, which are left untouched.
    pub features: Vec<Option<Scale>>,
}

fn population_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let k = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / k;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    (mean, var.sqrt())
}

impl NormalizationParams {
    /// Fits on the observed `y` and all rows of `u` in `train`.
    pub fn fit(train: &RegressionDataset) -> Result<Self> {
        let ys = train.observed_y();
        let (mean, std) = population_scale(ys.iter().copied());
        if !(std > 0.0) {
            return Err(Error::invalid("observations have zero variance on the training split"));
        }
        let features = (0..train.dim())
            .map(|j| {
                let col = train.u().column(j);
                let (m, s) = population_scale(col.iter().copied());
                if s > 1e-12 * m.abs().max(1.0) {
                    Some(Scale { mean: m, std: s })
                } else {
                    None
                }
            })
            .collect();
        Ok(Self { y: Scale { mean, std }, features })
    }

    pub fn normalize(&self, dataset: &RegressionDataset) -> Result<RegressionDataset> {
        if dataset.dim() != self.features.len() {
            return Err(Error::DimensionMismatch { expected: self.features.len(), found: dataset.dim() });
        }
        let mut u = dataset.u().clone();
        for (j, scale) in self.features.iter().enumerate() {
            if let Some(s) = scale {
                u.column_mut(j).iter_mut().for_each(|x| *x = s.apply(*x));
            }
        }
        let y = dataset
            .y()
            .iter()
            .zip(dataset.observed())
            .map(|(&v, &o)| if o { self.y.apply(v) } else { f64::NAN })
            .collect();
        RegressionDataset::with_times(u, y, dataset.observed().to_vec(), dataset.times().to_vec())
    }

    pub fn denormalize_y(&self, value: f64) -> f64 {
        value * self.y.std + self.y.mean
    }
}

/// Row index at which the training split ends.
pub fn split_point(horizon: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let k = (horizon as f64 * train_fraction).round() as usize;
    if k == 0 || k >= horizon {
        return Err(Error::invalid("train fraction leaves an empty split"));
    }
    Ok(k)
}

/// Splits at `round(T * train_fraction)` and normalizes both halves with
/// parameters fitted on the first.
pub fn split_and_normalize(
    dataset: &RegressionDataset,
    train_fraction: f64,
) -> Result<(RegressionDataset, RegressionDataset, NormalizationParams)> {
    let k = split_point(dataset.horizon(), train_fraction)?;
    let train = dataset.slice(0..k)?;
    let test = dataset.slice(k..dataset.horizon())?;
    let params = NormalizationParams::fit(&train)?;
    Ok((params.normalize(&train)?, params.normalize(&test)?, params))
}
