//! Command-line front end for `krrbw`.
//!
//! Exit codes: 0 success, 2 input error (bad flags, unreadable or malformed
//! files), 3 computation error (selector, factorization or failed claim).
//!
//! Defaults shown by `--help` come from the core constants:
//!
//! ```
//! use krrbw::bandwidth::{DEFAULT_FOLDS, DEFAULT_GRID_MIN, DEFAULT_GRID_SIZE, DEFAULT_LAMBDA};
//! assert_eq!(DEFAULT_LAMBDA, 1e-3);
//! assert_eq!(DEFAULT_FOLDS, 10);
//! assert_eq!(DEFAULT_GRID_SIZE, 100);
//! assert_eq!(DEFAULT_GRID_MIN, 0.01);
//! assert_eq!(krrbw_cli::DEFAULT_SEED, 0);
//! assert_eq!(krrbw_cli::DEFAULT_REPEATS, 100);
//! assert_eq!(krrbw_cli::DEFAULT_NOISE_SD, 0.1);
//! ```

mod plot;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use krrbw::bandwidth::{
    select, select_jacobian, JacobianParams, Method, SelectionConfig, DEFAULT_FOLDS, DEFAULT_GRID_MIN,
    DEFAULT_GRID_SIZE, DEFAULT_LAMBDA,
};
use krrbw::data::{format_float, generate_synthetic, load_csv, load_features_csv, Dataset};
use krrbw::eval::{run_jackknife, run_sweep, Axis, DataSource, JackknifeConfig, SplitRule, SweepConfig};
use krrbw::krr::{self, KrrModel};
use krrbw::verify::{
    check_bermanis_count, check_prop1_regimes, check_prop2_chain, check_prop3_grad_max, check_prop4,
    write_reports_csv, BoundReport,
};
use krrbw::{DMatrix, Error};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_REPEATS: usize = 100;
pub const DEFAULT_NOISE_SD: f64 = 0.1;
pub const DEFAULT_SYNTH_N: usize = 40;
pub const DEFAULT_TEST_SIZE: usize = 1000;
pub const DEFAULT_TEST_FRACTION: f64 = 0.5;
pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_JACKKNIFE_POINTS: usize = 100;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "krrbw", version, about = "Gaussian kernel ridge regression with closed-form bandwidth selection")]
pub struct Cli {
    /// Worker threads for parallel work (all cores when omitted); results do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a bandwidth for a training CSV and print it
    Select(SelectArgs),
    /// Fit a model and write it to a model file
    Fit(FitArgs),
    /// Predict with a saved model
    Predict(PredictArgs),
    /// Repeated train/test experiments over sample sizes or ridge values
    Sweep(SweepArgs),
    /// Leave-one-out resampling of selected bandwidths and predictions
    Jackknife(JackknifeArgs),
    /// Numerically check a bound on generated or supplied data
    Verify(VerifyArgs),
    /// Generate a synthetic sine dataset
    Synth(SynthArgs),
    /// Render a sweep CSV as SVG
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Jacobian,
    Silverman,
    Cv,
    SeededCv,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Jacobian => Method::Jacobian,
            MethodArg::Silverman => Method::Silverman,
            MethodArg::Cv => Method::Cv,
            MethodArg::SeededCv => Method::SeededCv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    N,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClaimArg {
    Prop1,
    Prop2,
    Prop3,
    Prop4,
    Bermanis,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    R2,
    Sigma,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV; the last column is the response
    #[arg(long)]
    pub input: PathBuf,
    /// The input CSV starts with a header row
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    /// Ridge parameter λ
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Cross-validation folds
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    /// Cross-validation grid size
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    /// Smallest σ on the cross-validation grid
    #[arg(long, default_value_t = DEFAULT_GRID_MIN)]
    pub grid_min: f64,
    /// Largest σ on the cross-validation grid (data diameter when omitted)
    #[arg(long)]
    pub grid_max: Option<f64>,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl SelectionArgs {
    fn config(&self) -> SelectionConfig {
        SelectionConfig {
            lambda: self.lambda,
            folds: self.folds,
            grid_size: self.grid_size,
            grid_min: self.grid_min,
            grid_max: self.grid_max,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Bandwidth selector
    #[arg(long, value_enum, default_value_t = MethodArg::Jacobian)]
    pub method: MethodArg,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Write the cross-validation curve here (CV selectors only)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Bandwidth selector, ignored when --sigma is given
    #[arg(long, value_enum, default_value_t = MethodArg::Jacobian)]
    pub method: MethodArg,
    /// Fixed bandwidth instead of a selector
    #[arg(long)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Model file to write
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV (no response column)
    #[arg(long)]
    pub input: PathBuf,
    /// The feature CSV starts with a header row
    #[arg(long)]
    pub header: bool,
    /// Prediction CSV (standard output when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset to split repeatedly (fresh synthetic draws when omitted)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// The input CSV starts with a header row
    #[arg(long)]
    pub header: bool,
    /// Swept quantity
    #[arg(long, value_enum, default_value_t = AxisArg::N)]
    pub axis: AxisArg,
    /// Axis values, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Selectors to compare, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "jacobian,silverman,cv,seeded-cv")]
    pub methods: Vec<MethodArg>,
    /// Training size when sweeping λ (all non-test rows of --input when omitted)
    #[arg(long)]
    pub n: Option<usize>,
    /// Repeats per axis value
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    /// Noise standard deviation of synthetic draws
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
    /// Test rows per replicate (synthetic draws, or --input when given)
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Fraction of --input rows held out per replicate when --test-size is omitted
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Sweep report CSV (standard output when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JackknifeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Selectors to compare, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "jacobian,silverman,cv,seeded-cv")]
    pub methods: Vec<MethodArg>,
    /// Evaluation points CSV (evenly spaced over the input range when omitted, 1-D only)
    #[arg(long)]
    pub eval_points: Option<PathBuf>,
    /// Number of evenly spaced evaluation points
    #[arg(long, default_value_t = DEFAULT_JACKKNIFE_POINTS)]
    pub grid_points: usize,
    /// Fraction of rows set aside as reference data before resampling
    #[arg(long)]
    pub holdout: Option<f64>,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Jackknife report CSV (standard output when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Claim to check
    #[arg(long, value_enum, default_value_t = ClaimArg::All)]
    pub claim: ClaimArg,
    /// Sample size for generated instances
    #[arg(long, default_value_t = DEFAULT_SYNTH_N)]
    pub n: usize,
    /// Input dimension for the regime check
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Data diameter for the regime check
    #[arg(long, default_value_t = 1.0)]
    pub l_max: f64,
    /// Ridge parameter λ
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Bandwidth (the Jacobian choice for the data when omitted; 1 for prop3)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Random probe points for the gradient chain
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    /// Relative singular-value cutoff for the counting bound
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Dataset for data-based claims (synthetic draw of --n rows when omitted)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// The input CSV starts with a header row
    #[arg(long)]
    pub header: bool,
    /// Noise standard deviation of the synthetic draw
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Report CSV
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of rows
    #[arg(long, default_value_t = DEFAULT_SYNTH_N)]
    pub n: usize,
    /// Noise standard deviation
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output CSV with header x1,y (standard output when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Sweep report CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Quantity on the vertical axis
    #[arg(long, value_enum, default_value_t = MetricArg::R2)]
    pub metric: MetricArg,
    /// SVG file to write
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() || matches!(e, Error::InvalidArgument(_)) {
        EXIT_INPUT
    } else {
        EXIT_COMPUTE
    }
}

fn dispatch(command: &Command) -> krrbw::Result<i32> {
    match command {
        Command::Select(a) => cmd_select(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Jackknife(a) => cmd_jackknife(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Runs `write` against `path`, or standard output when `path` is `None`.
fn emit<F>(path: Option<&Path>, write: F) -> krrbw::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_error(p, e))?;
            let mut out = BufWriter::new(file);
            write(&mut out).and_then(|_| out.flush()).map_err(|e| io_error(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out).and_then(|_| out.flush()).map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn methods(list: &[MethodArg]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for &m in list {
        let m = Method::from(m);
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn cmd_select(a: &SelectArgs) -> krrbw::Result<i32> {
    let data = load_csv(&a.input.input, a.input.header)?;
    let result = select(a.method.into(), &data, &a.selection.config())?;
    let mut lines = vec![
        format!("sigma={}", result.sigma),
        format!("method={}", result.method),
        format!("n={}", data.n()),
        format!("p={}", data.p()),
        format!("lambda={}", a.selection.lambda),
    ];
    if let Some(regime) = result.regime {
        lines.push(format!("regime={}", regime.name()));
        lines.push(format!("clamped={}", result.clamped));
    }
    if let Some(j) = result.j2a_at_sigma {
        lines.push(format!("jacobian_norm={j}"));
    }
    if result.cv_curve.is_some() {
        lines.push(format!("cv_failures={}", result.cv_failures.len()));
    }
    emit(None, |out| lines.iter().try_for_each(|l| writeln!(out, "{l}")))?;
    if let (Some(path), Some(curve)) = (&a.output, &result.cv_curve) {
        emit(Some(path), |out| {
            writeln!(out, "sigma,loss")?;
            curve
                .iter()
                .try_for_each(|c| writeln!(out, "{},{}", format_float(c.sigma), format_float(c.loss)))
        })?;
    }
    Ok(0)
}

fn cmd_fit(a: &FitArgs) -> krrbw::Result<i32> {
    let data = load_csv(&a.input.input, a.input.header)?;
    let sigma = match a.sigma {
        Some(s) => s,
        None => select(a.method.into(), &data, &a.selection.config())?.sigma,
    };
    let model = krr::fit(&data, sigma, a.selection.lambda)?;
    model.write(&a.output)?;
    println!("sigma={sigma}");
    Ok(0)
}

fn cmd_predict(a: &PredictArgs) -> krrbw::Result<i32> {
    let model = KrrModel::read(&a.model)?;
    let x = load_features_csv(&a.input, a.header)?;
    let pred = model.predict(&x)?;
    emit(a.output.as_deref(), |out| {
        writeln!(out, "prediction")?;
        pred.iter().try_for_each(|v| writeln!(out, "{}", format_float(*v)))
    })?;
    Ok(0)
}

fn cmd_sweep(a: &SweepArgs) -> krrbw::Result<i32> {
    let source = match &a.input {
        Some(path) => DataSource::Fixed {
            data: load_csv(path, a.header)?,
            split: match a.test_size {
                Some(m) => SplitRule::TestSize(m),
                None => SplitRule::TestFraction(a.test_fraction),
            },
        },
        None => DataSource::Synthetic {
            noise_sd: a.noise_sd,
            test_size: a.test_size.unwrap_or(DEFAULT_TEST_SIZE),
        },
    };
    let fixed_n = match (&source, a.n) {
        (DataSource::Synthetic { .. }, None) => Some(DEFAULT_SYNTH_N),
        (_, n) => n,
    };
    let config = SweepConfig {
        axis: match a.axis {
            AxisArg::N => Axis::SampleSize,
            AxisArg::Lambda => Axis::Lambda,
        },
        values: a.values.clone(),
        fixed_lambda: a.selection.lambda,
        fixed_n,
        repeats: a.repeats,
        methods: methods(&a.methods),
        selection: a.selection.config(),
        seed: a.selection.seed,
    };
    let report = run_sweep(&source, &config)?;
    emit(a.output.as_deref(), |out| report.write_to(out))?;
    Ok(0)
}

fn cmd_jackknife(a: &JackknifeArgs) -> krrbw::Result<i32> {
    let data = load_csv(&a.input.input, a.input.header)?;
    let grid = match &a.eval_points {
        Some(path) => load_features_csv(path, a.input.header)?,
        None => {
            if data.p() != 1 {
                return Err(Error::InvalidArgument(
                    "--eval-points is required for inputs with more than one feature".into(),
                ));
            }
            if a.grid_points < 2 {
                return Err(Error::InvalidArgument("--grid-points must be at least 2".into()));
            }
            let col = data.features().column(0);
            let (lo, hi) = (col.min(), col.max());
            let m = a.grid_points;
            DMatrix::from_fn(m, 1, |i, _| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        }
    };
    let config = JackknifeConfig {
        methods: methods(&a.methods),
        selection: a.selection.config(),
        holdout_fraction: a.holdout,
        seed: a.selection.seed,
    };
    let report = run_jackknife(&data, &grid, &config)?;
    emit(a.output.as_deref(), |out| report.write_to(out))?;
    Ok(0)
}

fn verify_data(a: &VerifyArgs) -> krrbw::Result<Dataset> {
    match &a.input {
        Some(path) => load_csv(path, a.header),
        None => generate_synthetic(a.n, a.noise_sd, a.seed),
    }
}

fn cmd_verify(a: &VerifyArgs) -> krrbw::Result<i32> {
    let wants = |c: ClaimArg| a.claim == c || a.claim == ClaimArg::All;
    let mut reports: Vec<BoundReport> = Vec::new();
    if wants(ClaimArg::Prop1) {
        reports.push(check_prop1_regimes(&JacobianParams::new(a.n, a.p, a.l_max, a.lambda)?));
    }
    if wants(ClaimArg::Prop3) {
        reports.push(check_prop3_grad_max(a.sigma.unwrap_or(1.0))?);
    }
    if wants(ClaimArg::Prop2) || wants(ClaimArg::Prop4) || wants(ClaimArg::Bermanis) {
        let data = verify_data(a)?;
        let sigma = match a.sigma {
            Some(s) => s,
            None => select_jacobian(data.features(), a.lambda)?.sigma,
        };
        if wants(ClaimArg::Prop2) {
            reports.push(check_prop2_chain(&data, sigma, a.lambda, a.trials, a.seed)?);
        }
        if wants(ClaimArg::Prop4) {
            reports.push(check_prop4(data.features(), sigma, a.lambda)?);
        }
        if wants(ClaimArg::Bermanis) {
            reports.push(check_bermanis_count(data.features(), sigma, a.delta)?);
        }
    }
    emit(None, |out| {
        reports.iter().try_for_each(|r| {
            writeln!(
                out,
                "{} claim={} trials={} violations={} worst_margin={:e} seed={} {}",
                if r.passed() { "PASS" } else { "FAIL" },
                r.claim.name(),
                r.trials,
                r.violations,
                r.worst_margin,
                r.seed,
                r.config
            )
        })
    })?;
    if let Some(path) = &a.output {
        emit(Some(path), |out| write_reports_csv(out, &reports))?;
    }
    Ok(if reports.iter().all(BoundReport::passed) { 0 } else { EXIT_COMPUTE })
}

fn cmd_synth(a: &SynthArgs) -> krrbw::Result<i32> {
    let data = generate_synthetic(a.n, a.noise_sd, a.seed)?;
    emit(a.output.as_deref(), |out| data.write_to(out, true))?;
    Ok(0)
}

fn cmd_plot(a: &PlotArgs) -> krrbw::Result<i32> {
    let rows = krrbw::eval::read_sweep_csv(&a.input)?;
    let svg = plot::render(&rows, a.metric == MetricArg::Sigma)?;
    emit(Some(&a.output), |out| out.write_all(svg.as_bytes()))?;
    Ok(0)
}
