//! Datasets, CSV ingestion, synthetic data and resampling index plans.
//!
//! CSV layout: one observation per row, comma separated, every column but
//! the last is a feature and the last column is the response. A single
//! header row is optional. Features are used exactly as read; nothing is
//! standardized.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Training data: an `n × p` feature matrix and a length-`n` response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Degenerate(
                "a dataset needs at least one row and one feature column".into(),
            ));
        }
        if features.nrows() != response.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: response.len(),
            });
        }
        for i in 0..features.nrows() {
            for j in 0..features.ncols() {
                if !features[(i, j)].is_finite() {
                    return Err(Error::NonFinite {
                        row: i + 1,
                        column: j + 1,
                    });
                }
            }
            if !response[i].is_finite() {
                return Err(Error::NonFinite {
                    row: i + 1,
                    column: features.ncols() + 1,
                });
            }
        }
        Ok(Self { features, response })
    }

    /// Builds a one-feature dataset from paired slices.
    pub fn from_1d(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            DVector::from_column_slice(y),
        )
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            response: self.response.select_rows(indices),
        }
    }

    /// Writes the dataset in the CSV layout accepted by [`load_csv`].
    pub fn write_csv(&self, path: &Path, header: bool) -> Result<()> {
        let io_err = |e: std::io::Error| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        self.write_to(&mut out, header).map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn write_to<W: Write + ?Sized>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            let mut names: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
            names.push("y".into());
            writeln!(out, "{}", names.join(","))?;
        }
        for i in 0..self.n() {
            let mut fields: Vec<String> =
                (0..self.p()).map(|j| format_float(self.features[(i, j)])).collect();
            fields.push(format_float(self.response[i]));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Reads a numeric CSV into a row-major value table.
///
/// Errors name the 1-based line of the file and the 1-based column.
pub fn read_table(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(k + 1 + usize::from(has_header));
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row: line,
                expected,
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                column: j + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: line,
                    column: j + 1,
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a dataset whose last column is the response.
pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset> {
    let rows = read_table(path, has_header)?;
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() {
        return Err(Error::Degenerate(format!("{} has no data rows", path.display())));
    }
    if width < 2 {
        return Err(Error::Parse {
            row: 1 + usize::from(has_header),
            column: width,
            message: "need at least one feature column and a response column".into(),
        });
    }
    let n = rows.len();
    let p = width - 1;
    let features = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let response = DVector::from_fn(n, |i, _| rows[i][p]);
    Dataset::new(features, response)
}

/// Loads a feature-only matrix (no response column), e.g. prediction inputs.
pub fn load_features_csv(path: &Path, has_header: bool) -> Result<DMatrix<f64>> {
    let rows = read_table(path, has_header)?;
    let p = rows.first().map(Vec::len).unwrap_or(0);
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Draws `x ~ U[-5, 5]`, `y = sin(2πx) + ε`, `ε ~ N(0, noise_sd²)`.
///
/// Deterministic for a fixed seed. With `noise_sd == 0` the response is
/// exactly `sin(2πx)`.
pub fn generate_synthetic(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_sd must be finite and non-negative, got {noise_sd}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, noise_sd).expect("validated above");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = -5.0 + 10.0 * rng.random::<f64>();
        let eps = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        x.push(xi);
        y.push((2.0 * PI * xi).sin() + eps);
    }
    Dataset::from_1d(&x, &y)
}

/// Index sets for one train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Partitions `0..n` into `k` shuffled folds whose sizes differ by at most one.
///
/// Plan `i` tests on fold `i` and trains on the rest. Both index lists are
/// sorted ascending.
pub fn make_kfold(n: usize, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count must satisfy 2 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));

    let base = n / k;
    let extra = n % k;
    let mut plans = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let mut test = order[start..start + size].to_vec();
        test.sort_unstable();
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train = (0..n).filter(|&i| !in_test[i]).collect();
        plans.push(SplitPlan {
            train_indices: train,
            test_indices: test,
            seed,
        });
        start += size;
    }
    Ok(plans)
}

/// Leave-one-out plans: plan `i` tests on `{i}`.
pub fn make_jackknife(n: usize) -> Result<Vec<SplitPlan>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "jackknife needs at least 2 observations, got {n}"
        )));
    }
    Ok((0..n)
        .map(|i| SplitPlan {
            train_indices: (0..n).filter(|&j| j != i).collect(),
            test_indices: vec![i],
            seed: 0,
        })
        .collect())
}

/// Random split with `test_size` test rows and `train_size` training rows
/// drawn without replacement from `0..n`.
pub fn random_split(n: usize, train_size: usize, test_size: usize, seed: u64) -> Result<SplitPlan> {
    if train_size == 0 || train_size + test_size > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {train_size} training and {test_size} test rows from {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut test = order[..test_size].to_vec();
    let mut train = order[test_size..test_size + train_size].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed,
    })
}
