//! Experiment harness: R², jackknife resampling and n/λ sweeps.
//!
//! Every replicate draws from a seed derived from the run seed, and
//! replicates are aggregated in a fixed order, so reports do not depend on
//! how many threads ran them.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bandwidth::{select, Method, SelectionConfig};
use crate::data::{format_float, generate_synthetic, make_jackknife, random_split, Dataset};
use crate::error::{Error, Result};
use crate::krr;
use crate::rng::derive_seed;

/// `1 - SS_res / SS_tot` with the total sum of squares about the mean of `y_true`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidArgument("R² needs at least two observations".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("R² is undefined for a constant response".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Linear interpolation between order statistics (Hyndman–Fan type 7).
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for a single value.
fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub p05: f64,
    pub p95: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                p05: f64::NAN,
                p95: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: mean(values),
            p05: percentile(&sorted, 0.05),
            p95: percentile(&sorted, 0.95),
            sd: sample_sd(values),
        }
    }
}

/// Swept quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    SampleSize,
    Lambda,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::SampleSize => "n",
            Axis::Lambda => "lambda",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Axis::SampleSize),
            "lambda" => Ok(Axis::Lambda),
            _ => Err(Error::InvalidArgument(format!("unknown axis '{s}'"))),
        }
    }
}

/// How many rows of a fixed dataset are held out for testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    TestFraction(f64),
    TestSize(usize),
}

impl SplitRule {
    fn test_size(&self, total: usize) -> usize {
        match *self {
            SplitRule::TestFraction(f) => ((f * total as f64).round() as usize).max(1),
            SplitRule::TestSize(m) => m,
        }
    }
}

/// Where sweep replicates get their data.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Fresh synthetic sine draws: `n` training rows and `test_size` test rows per replicate.
    Synthetic { noise_sd: f64, test_size: usize },
    /// Random train/test splits of one dataset.
    Fixed { data: Dataset, split: SplitRule },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// λ when sweeping n.
    pub fixed_lambda: f64,
    /// Training size when sweeping λ; for a fixed dataset, `None` trains on
    /// every row not held out.
    pub fixed_n: Option<usize>,
    pub repeats: usize,
    pub methods: Vec<Method>,
    /// Folds and grid for the CV selectors; its λ and seed are overridden per replicate.
    pub selection: SelectionConfig,
    pub seed: u64,
}

/// Per-method statistics at one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub successes: usize,
    pub failures: usize,
    pub r2: Summary,
    pub sigma: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
    pub repeats: usize,
    pub seed: u64,
}

/// Outcome of one method on one replicate: `(σ, R²)` or the failure.
pub type ReplicateOutcome = std::result::Result<(f64, f64), Error>;

/// Selects σ with `method`, fits on `train`, and scores R² on `test`.
pub fn score_method(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    config: &SelectionConfig,
) -> ReplicateOutcome {
    let sigma = select(method, train, config)?.sigma;
    let model = krr::fit(train, sigma, config.lambda)?;
    let pred = model.predict(test.features())?;
    Ok((sigma, r_squared(test.response().as_slice(), pred.as_slice())?))
}

/// Seed of replicate `repeat` at axis position `point`. λ sweeps reuse one
/// draw per repeat across every λ, so curves are paired.
pub fn replicate_seed(config: &SweepConfig, point: usize, repeat: usize) -> u64 {
    match config.axis {
        Axis::SampleSize => derive_seed(config.seed, &[point as u64, repeat as u64]),
        Axis::Lambda => derive_seed(config.seed, &[repeat as u64]),
    }
}

/// Training and test data for replicate `repeat` at axis position `point`.
pub fn sweep_replicate_data(
    source: &DataSource,
    config: &SweepConfig,
    point: usize,
    repeat: usize,
) -> Result<(Dataset, Dataset, f64)> {
    let seed = replicate_seed(config, point, repeat);
    let value = config.values[point];
    let (n, lambda) = match config.axis {
        Axis::SampleSize => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::InvalidArgument(format!("sample size {value} is not a positive integer")));
            }
            (Some(value as usize), config.fixed_lambda)
        }
        Axis::Lambda => (config.fixed_n, value),
    };
    match source {
        DataSource::Synthetic { noise_sd, test_size } => {
            let n = n.ok_or_else(|| Error::InvalidArgument("synthetic λ sweeps need a training size".into()))?;
            let train = generate_synthetic(n, *noise_sd, derive_seed(seed, &[0]))?;
            let test = generate_synthetic(*test_size, *noise_sd, derive_seed(seed, &[1]))?;
            Ok((train, test, lambda))
        }
        DataSource::Fixed { data, split } => {
            let test_size = split.test_size(data.n());
            let n = n.unwrap_or(data.n().saturating_sub(test_size));
            let plan = random_split(data.n(), n, test_size, derive_seed(seed, &[0]))?;
            Ok((data.subset(&plan.train_indices), data.subset(&plan.test_indices), lambda))
        }
    }
}

/// Runs every method on `repeats` replicates per axis value.
pub fn run_sweep(source: &DataSource, config: &SweepConfig) -> Result<SweepReport> {
    if config.values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one axis value".into()));
    }
    if config.repeats < 2 {
        return Err(Error::InvalidArgument("sweep needs at least two repeats".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one method".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..config.values.len())
        .flat_map(|a| (0..config.repeats).map(move |r| (a, r)))
        .collect();

    let outcomes: Vec<Vec<ReplicateOutcome>> = jobs
        .par_iter()
        .map(|&(a, r)| -> Result<Vec<ReplicateOutcome>> {
            let (train, test, lambda) = sweep_replicate_data(source, config, a, r)?;
            let selection = SelectionConfig {
                lambda,
                seed: derive_seed(replicate_seed(config, a, r), &[2]),
                ..config.selection.clone()
            };
            Ok(config
                .methods
                .iter()
                .map(|&m| score_method(m, &train, &test, &selection))
                .collect())
        })
        .collect::<Result<_>>()?;

    let points = config
        .values
        .iter()
        .enumerate()
        .map(|(a, &axis_value)| {
            let block = &outcomes[a * config.repeats..(a + 1) * config.repeats];
            let methods = config
                .methods
                .iter()
                .enumerate()
                .map(|(k, &method)| {
                    let ok: Vec<(f64, f64)> = block.iter().filter_map(|o| o[k].as_ref().ok().copied()).collect();
                    let sigmas: Vec<f64> = ok.iter().map(|o| o.0).collect();
                    let r2s: Vec<f64> = ok.iter().map(|o| o.1).collect();
                    MethodSummary {
                        method,
                        successes: ok.len(),
                        failures: block.len() - ok.len(),
                        r2: Summary::of(&r2s),
                        sigma: Summary::of(&sigmas),
                    }
                })
                .collect();
            SweepPoint { axis_value, methods }
        })
        .collect();

    Ok(SweepReport {
        axis: config.axis,
        points,
        repeats: config.repeats,
        seed: config.seed,
    })
}

impl SweepReport {
    pub const CSV_HEADER: &'static str = "axis,axis_value,method,repeats,successes,failures,mean_r2,p05_r2,p95_r2,mean_sigma,p05_sigma,p95_sigma,sd_sigma";

    pub fn write_to<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for point in &self.points {
            for m in &point.methods {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.axis,
                    format_float(point.axis_value),
                    m.method,
                    self.repeats,
                    m.successes,
                    m.failures,
                    format_float(m.r2.mean),
                    format_float(m.r2.p05),
                    format_float(m.r2.p95),
                    format_float(m.sigma.mean),
                    format_float(m.sigma.p05),
                    format_float(m.sigma.p95),
                    format_float(m.sigma.sd),
                )?;
            }
        }
        Ok(())
    }

    /// Summary for `method` at axis position `point`.
    pub fn get(&self, point: usize, method: Method) -> Option<&MethodSummary> {
        self.points.get(point)?.methods.iter().find(|m| m.method == method)
    }
}

/// One row of a sweep CSV as read back for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub axis_value: f64,
    pub method: String,
    pub mean_r2: f64,
    pub p05_r2: f64,
    pub p95_r2: f64,
    pub mean_sigma: f64,
    pub p05_sigma: f64,
    pub p95_sigma: f64,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let io_err = |e: csv::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(io_err)?;
    let header: Vec<String> = reader.headers().map_err(io_err)?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = SweepReport::CSV_HEADER.split(',').collect();
    if header != expected {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "not a sweep report (header mismatch)".into(),
        });
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let line = k + 2;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or(Error::Parse {
                    row: line,
                    column: c + 1,
                    message: "expected a number".into(),
                })
        };
        rows.push(SweepRow {
            axis: rec.get(0).unwrap_or_default().to_string(),
            axis_value: num(1)?,
            method: rec.get(2).unwrap_or_default().to_string(),
            mean_r2: num(6)?,
            p05_r2: num(7)?,
            p95_r2: num(8)?,
            mean_sigma: num(9)?,
            p05_sigma: num(10)?,
            p95_sigma: num(11)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeConfig {
    pub methods: Vec<Method>,
    /// λ, folds and grid for every selector; the CV seed is re-derived per replicate.
    pub selection: SelectionConfig,
    /// Fraction of rows set aside as reference data before resampling.
    pub holdout_fraction: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeMethod {
    pub method: Method,
    pub mean_prediction: Vec<f64>,
    pub sd_prediction: Vec<f64>,
    pub mean_sigma: f64,
    pub sd_sigma: f64,
    pub replicates: usize,
    pub excluded: usize,
    /// Mean R² on the reference rows when a holdout was requested.
    pub holdout_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeReport {
    pub grid: DMatrix<f64>,
    pub methods: Vec<JackknifeMethod>,
}

/// Leave-one-out resampling: per method, select σ, fit and predict on
/// `eval_grid` for each of the `n` reduced training sets.
///
/// Standard deviations use the n - 1 denominator. Replicates whose
/// selector or fit fails are dropped and counted in `excluded`.
pub fn run_jackknife(data: &Dataset, eval_grid: &DMatrix<f64>, config: &JackknifeConfig) -> Result<JackknifeReport> {
    if eval_grid.ncols() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: eval_grid.ncols(),
        });
    }
    let (pool, reference) = match config.holdout_fraction {
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("holdout fraction must lie in (0, 1), got {f}")));
            }
            let m = ((f * data.n() as f64).round() as usize).max(1);
            let plan = random_split(data.n(), data.n() - m, m, derive_seed(config.seed, &[u64::MAX]))?;
            (data.subset(&plan.train_indices), Some(data.subset(&plan.test_indices)))
        }
        None => (data.clone(), None),
    };
    if pool.n() < 3 {
        return Err(Error::InvalidArgument(format!(
            "jackknife needs at least 3 observations, got {}",
            pool.n()
        )));
    }
    let plans = make_jackknife(pool.n())?;

    type Fit = Option<(f64, Vec<f64>, Option<f64>)>;
    let fits: Vec<Vec<Fit>> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let train = pool.subset(&plan.train_indices);
            let selection = SelectionConfig {
                seed: derive_seed(config.seed, &[i as u64]),
                ..config.selection.clone()
            };
            config
                .methods
                .iter()
                .map(|&m| -> Fit {
                    let sigma = select(m, &train, &selection).ok()?.sigma;
                    let model = krr::fit(&train, sigma, selection.lambda).ok()?;
                    let pred = model.predict(eval_grid).ok()?;
                    let r2 = match &reference {
                        Some(r) => {
                            let p = model.predict(r.features()).ok()?;
                            r_squared(r.response().as_slice(), p.as_slice()).ok()
                        }
                        None => None,
                    };
                    Some((sigma, pred.as_slice().to_vec(), r2))
                })
                .collect()
        })
        .collect();

    let m = eval_grid.nrows();
    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let ok: Vec<&(f64, Vec<f64>, Option<f64>)> = fits.iter().filter_map(|f| f[k].as_ref()).collect();
            let sigmas: Vec<f64> = ok.iter().map(|o| o.0).collect();
            let column = |g: usize| -> Vec<f64> { ok.iter().map(|o| o.1[g]).collect() };
            let r2s: Vec<f64> = ok.iter().filter_map(|o| o.2).collect();
            JackknifeMethod {
                method,
                mean_prediction: (0..m).map(|g| if ok.is_empty() { f64::NAN } else { mean(&column(g)) }).collect(),
                sd_prediction: (0..m).map(|g| sample_sd(&column(g))).collect(),
                mean_sigma: if ok.is_empty() { f64::NAN } else { mean(&sigmas) },
                sd_sigma: sample_sd(&sigmas),
                replicates: ok.len(),
                excluded: plans.len() - ok.len(),
                holdout_r2: reference.as_ref().map(|_| if r2s.is_empty() { f64::NAN } else { mean(&r2s) }),
            }
        })
        .collect();

    Ok(JackknifeReport {
        grid: eval_grid.clone(),
        methods,
    })
}

impl JackknifeReport {
    pub fn write_to<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        let p = self.grid.ncols();
        let mut header = vec!["method".to_string(), "point".to_string()];
        header.extend((1..=p).map(|j| format!("x{j}")));
        header.extend(
            ["mean_prediction", "sd_prediction", "mean_sigma", "sd_sigma", "replicates", "excluded", "holdout_r2"]
                .map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for m in &self.methods {
            for g in 0..self.grid.nrows() {
                let mut row = vec![m.method.to_string(), g.to_string()];
                row.extend((0..p).map(|c| format_float(self.grid[(g, c)])));
                row.push(format_float(m.mean_prediction[g]));
                row.push(format_float(m.sd_prediction[g]));
                row.push(format_float(m.mean_sigma));
                row.push(format_float(m.sd_sigma));
                row.push(m.replicates.to_string());
                row.push(m.excluded.to_string());
                row.push(m.holdout_r2.map(format_float).unwrap_or_default());
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}
