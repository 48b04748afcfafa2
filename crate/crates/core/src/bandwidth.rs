//! Bandwidth selectors for the Gaussian kernel.
//!
//! * [`select_jacobian`]: closed-form minimizer of the approximate Jacobian
//!   norm `J(σ) = j_a(σ)·j_b(σ)`.
//! * [`select_silverman`]: Silverman's rule of thumb (ignores λ).
//! * [`select_cv`]: k-fold grid cross-validation on squared error.
//! * [`select_seeded_cv`]: cross-validation on a grid around the
//!   closed-form value.
//!
//! `J` has stationary points
//!
//! ```text
//! σ_k = (√2/π) · l_max / ((n-1)^(1/p) - 1) · sqrt(1 - 2·W_k(-λ√e / (2n))),  k ∈ {0, -1}
//! ```
//!
//! which exist only while `λ ≤ 2n·e^(-3/2)`. Above that threshold `J` is
//! monotone and the selector evaluates `σ₀` at the threshold instead.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{make_kfold, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{check_sigma, max_pairwise_distance};
use crate::krr;
use crate::lambertw::{lambert_w, Branch};

/// Lower end of the default cross-validation grid, in data units.
pub const DEFAULT_GRID_MIN: f64 = 0.01;
pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// `2n·e^(-3/2)`, the largest λ for which `σ₀` exists.
pub fn regime_threshold(n: usize) -> f64 {
    2.0 * n as f64 * (-1.5f64).exp()
}

/// Shape of `J(σ)` as determined by λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// λ = 0: `J → ∞` at both ends, global minimum at `σ₀`.
    NoRegularization,
    /// `0 < λ ≤ 2n·e^(-3/2)`: local minimum at `σ₀`, local maximum at `σ₋₁`.
    LocalMinimum,
    /// λ above the threshold: `J` decreases monotonically to zero.
    Monotone,
}

impl Regime {
    pub fn classify(n: usize, lambda: f64) -> Self {
        if lambda == 0.0 {
            Regime::NoRegularization
        } else if lambda <= regime_threshold(n) {
            Regime::LocalMinimum
        } else {
            Regime::Monotone
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::NoRegularization => "no-regularization",
            Regime::LocalMinimum => "local-minimum",
            Regime::Monotone => "monotone",
        }
    }
}

/// Everything `J(σ)` depends on besides σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianParams {
    n: usize,
    p: usize,
    l_max: f64,
    lambda: f64,
}

impl JacobianParams {
    pub fn new(n: usize, p: usize, l_max: f64, lambda: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Degenerate(format!(
                "the Jacobian criterion needs n >= 3 observations, got {n}"
            )));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if !(l_max > 0.0 && l_max.is_finite()) {
            return Err(Error::Degenerate(format!(
                "data diameter must be positive, got {l_max} (all points identical?)"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(Self { n, p, l_max, lambda })
    }

    /// Parameters for the rows of `x`, with `l_max` its diameter.
    pub fn from_features(x: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        Self::new(x.nrows(), x.ncols(), max_pairwise_distance(x), lambda)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.n, self.p, self.l_max, lambda)
    }

    pub fn threshold(&self) -> f64 {
        regime_threshold(self.n)
    }

    pub fn regime(&self) -> Regime {
        Regime::classify(self.n, self.lambda)
    }

    /// `((n-1)^(1/p) - 1)`.
    fn count_term(&self) -> f64 {
        ((self.n - 1) as f64).powf(1.0 / self.p as f64) - 1.0
    }

    /// Exponent `t(σ) = (((n-1)^(1/p) - 1)·π·σ / (2·l_max))²` inside `j_b`.
    fn decay_exponent(&self, sigma: f64) -> f64 {
        let r = self.count_term() * std::f64::consts::PI * sigma / (2.0 * self.l_max);
        r * r
    }

    pub fn j_a(&self, sigma: f64) -> f64 {
        1.0 / sigma
    }

    pub fn j_b(&self, sigma: f64) -> f64 {
        1.0 / (self.n as f64 * (-self.decay_exponent(sigma)).exp() + self.lambda)
    }

    /// `ln J(σ)`, evaluated without overflow for any σ > 0.
    pub fn ln_norm(&self, sigma: f64) -> f64 {
        let t = self.decay_exponent(sigma);
        let n = self.n as f64;
        let ln_denominator = if self.lambda == 0.0 {
            n.ln() - t
        } else {
            // ln(n·e^(-t) + λ) = ln λ + ln(1 + (n/λ)·e^(-t)), or around the n·e^(-t) term.
            let a = n.ln() - t;
            let b = self.lambda.ln();
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            hi + (lo - hi).exp().ln_1p()
        };
        -sigma.ln() - ln_denominator
    }

    /// `J(σ) = j_a(σ)·j_b(σ)`; the σ-independent constant is left out.
    pub fn approx_jacobian_norm(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        Ok(self.j_a(sigma) * self.j_b(sigma))
    }

    /// Stationary point `σ_k` of `J` on the given branch.
    pub fn stationary_sigma(&self, branch: Branch) -> Result<f64> {
        let threshold = self.threshold();
        if self.lambda > threshold {
            return Err(Error::AboveThreshold {
                lambda: self.lambda,
                threshold,
            });
        }
        // -λ√e/(2n) written as -(λ/threshold)/e, so λ = threshold lands exactly on -1/e.
        let arg = -(self.lambda / threshold) * (1.0 / std::f64::consts::E);
        let w = lambert_w(arg, branch)?;
        let base = std::f64::consts::SQRT_2 / std::f64::consts::PI * self.l_max / self.count_term();
        Ok(base * (1.0 - 2.0 * w).sqrt())
    }
}

pub fn approx_jacobian_norm(sigma: f64, params: &JacobianParams) -> Result<f64> {
    params.approx_jacobian_norm(sigma)
}

pub fn jacobian_sigma(params: &JacobianParams, branch: Branch) -> Result<f64> {
    params.stationary_sigma(branch)
}

/// Which selector produced a bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Jacobian,
    Silverman,
    Cv,
    SeededCv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Jacobian, Method::Silverman, Method::Cv, Method::SeededCv];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Jacobian => "jacobian",
            Method::Silverman => "silverman",
            Method::Cv => "cv",
            Method::SeededCv => "seeded-cv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// One point of a cross-validation curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPoint {
    pub sigma: f64,
    /// Mean over folds of the per-fold mean squared error; `+∞` if any fold failed.
    pub loss: f64,
}

/// A grid `(σ, fold)` pair whose training system could not be factored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvFailure {
    pub sigma: f64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthResult {
    pub sigma: f64,
    pub method: Method,
    /// Set by the Jacobian selector only.
    pub regime: Option<Regime>,
    /// True when λ exceeded the threshold and σ₀ was evaluated at the threshold.
    pub clamped: bool,
    /// `J(σ)` at the selected σ with the caller's λ (Jacobian selector only).
    pub j2a_at_sigma: Option<f64>,
    pub cv_curve: Option<Vec<CvPoint>>,
    pub cv_failures: Vec<CvFailure>,
}

impl BandwidthResult {
    fn plain(sigma: f64, method: Method) -> Self {
        Self {
            sigma,
            method,
            regime: None,
            clamped: false,
            j2a_at_sigma: None,
            cv_curve: None,
            cv_failures: Vec::new(),
        }
    }
}

/// Closed-form Jacobian-control bandwidth for training inputs `x`.
pub fn select_jacobian(x: &DMatrix<f64>, lambda: f64) -> Result<BandwidthResult> {
    let params = JacobianParams::from_features(x, lambda)?;
    let threshold = params.threshold();
    let clamped = lambda > threshold;
    let effective = if clamped { params.with_lambda(threshold)? } else { params };
    let sigma = effective.stationary_sigma(Branch::Principal)?;
    Ok(BandwidthResult {
        regime: Some(params.regime()),
        clamped,
        j2a_at_sigma: Some(params.approx_jacobian_norm(sigma)?),
        ..BandwidthResult::plain(sigma, Method::Jacobian)
    })
}

/// `(4 / (n(p+2)))^(1/(p+4)) · sd`.
pub fn silverman_sigma(n: usize, p: usize, sd: f64) -> f64 {
    (4.0 / (n as f64 * (p as f64 + 2.0))).powf(1.0 / (p as f64 + 4.0)) * sd
}

/// Pooled feature standard deviation: the square root of the mean of the
/// per-column sample variances (n - 1 denominator).
pub fn pooled_sd(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    let mean_var = (0..x.ncols())
        .map(|c| {
            let col = x.column(c);
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum::<f64>()
        / x.ncols() as f64;
    mean_var.sqrt()
}

/// Silverman's rule of thumb on the features of `x`. Independent of λ.
pub fn select_silverman(x: &DMatrix<f64>) -> Result<BandwidthResult> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "Silverman's rule needs at least 2 observations, got {n}"
        )));
    }
    let constant = (0..x.ncols()).all(|c| x.column(c).iter().all(|&v| v == x[(0, c)]));
    let sd = pooled_sd(x);
    if constant || !(sd > 0.0) {
        return Err(Error::Degenerate(
            "features have zero variance; Silverman's rule is undefined".into(),
        ));
    }
    Ok(BandwidthResult::plain(silverman_sigma(n, x.ncols(), sd), Method::Silverman))
}

/// `m` log-spaced points from `a` to `b` inclusive; `m = 1` gives `sqrt(a·b)`.
pub fn log_space(a: f64, b: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![(a * b).sqrt()],
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            let step = (lb - la) / (m - 1) as f64;
            (0..m)
                .map(|i| match i {
                    0 => a,
                    i if i == m - 1 => b,
                    i => (la + step * i as f64).exp(),
                })
                .collect()
        }
    }
}

/// Default grid: `size` log-spaced values from `grid_min` to `grid_max`
/// (the data diameter when `None`).
pub fn default_cv_grid(
    x: &DMatrix<f64>,
    size: usize,
    grid_min: f64,
    grid_max: Option<f64>,
) -> Result<Vec<f64>> {
    let hi = match grid_max {
        Some(v) => v,
        None => max_pairwise_distance(x),
    };
    if !(hi > 0.0 && hi.is_finite() && grid_min > 0.0 && grid_min.is_finite()) {
        return Err(Error::Degenerate(format!(
            "cross-validation grid bounds must be positive, got [{grid_min}, {hi}]"
        )));
    }
    Ok(log_space(grid_min, hi, size))
}

fn fold_loss(train: &Dataset, test: &Dataset, sigma: f64, lambda: f64) -> f64 {
    let loss = krr::fit(train, sigma, lambda)
        .and_then(|m| m.predict(test.features()))
        .map(|pred| (pred - test.response()).norm_squared() / test.n() as f64);
    match loss {
        Ok(v) if !v.is_nan() => v,
        _ => f64::INFINITY,
    }
}

/// k-fold cross-validation over `grid`.
///
/// Folds are drawn once from `seed` and shared by every grid value. The
/// selected σ minimizes the fold-averaged mean squared error; ties go to the
/// smallest σ. Fits that fail to factor count as infinite loss.
pub fn select_cv(
    data: &Dataset,
    lambda: f64,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<BandwidthResult> {
    cv_with_method(data, lambda, folds, grid, seed, Method::Cv)
}

fn cv_with_method(
    data: &Dataset,
    lambda: f64,
    folds: usize,
    grid: &[f64],
    seed: u64,
    method: Method,
) -> Result<BandwidthResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("cross-validation grid is empty".into()));
    }
    for &s in grid {
        check_sigma(s)?;
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "regularization must be finite and non-negative, got {lambda}"
        )));
    }
    let plans = make_kfold(data.n(), folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = plans
        .iter()
        .map(|p| (data.subset(&p.train_indices), data.subset(&p.test_indices)))
        .collect();

    let per_fold: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&s| {
            splits
                .iter()
                .map(|(train, test)| fold_loss(train, test, s, lambda))
                .collect()
        })
        .collect();

    let mut curve = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (&sigma, losses) in grid.iter().zip(&per_fold) {
        for (fold, l) in losses.iter().enumerate() {
            if l.is_infinite() {
                failures.push(CvFailure { sigma, fold });
            }
        }
        let loss = losses.iter().sum::<f64>() / losses.len() as f64;
        curve.push(CvPoint { sigma, loss });
    }

    let best = curve
        .iter()
        .filter(|c| c.loss.is_finite())
        .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.sigma.total_cmp(&b.sigma)))
        .ok_or(Error::AllGridPointsFailed)?;

    Ok(BandwidthResult {
        cv_curve: Some(curve.clone()),
        cv_failures: failures,
        ..BandwidthResult::plain(best.sigma, method)
    })
}

/// Cross-validation on `grid_size` log-spaced values in `[σ₀/5, 5σ₀]`, with
/// `σ₀` the Jacobian bandwidth of the whole dataset. A single-point grid is `{σ₀}`.
pub fn select_seeded_cv(
    data: &Dataset,
    lambda: f64,
    folds: usize,
    grid_size: usize,
    seed: u64,
) -> Result<BandwidthResult> {
    let sigma0 = select_jacobian(data.features(), lambda)?.sigma;
    let grid = if grid_size == 1 {
        vec![sigma0]
    } else {
        log_space(sigma0 / 5.0, sigma0 * 5.0, grid_size)
    };
    cv_with_method(data, lambda, folds, &grid, seed, Method::SeededCv)
}

/// Knobs shared by every selector.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub lambda: f64,
    pub folds: usize,
    pub grid_size: usize,
    pub grid_min: f64,
    /// Upper end of the plain CV grid; the data diameter when `None`.
    pub grid_max: Option<f64>,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            folds: DEFAULT_FOLDS,
            grid_size: DEFAULT_GRID_SIZE,
            grid_min: DEFAULT_GRID_MIN,
            grid_max: None,
            seed: 0,
        }
    }
}

/// Runs `method` on `data` with `config`.
pub fn select(method: Method, data: &Dataset, config: &SelectionConfig) -> Result<BandwidthResult> {
    match method {
        Method::Jacobian => select_jacobian(data.features(), config.lambda),
        Method::Silverman => select_silverman(data.features()),
        Method::Cv => {
            let grid = default_cv_grid(data.features(), config.grid_size, config.grid_min, config.grid_max)?;
            select_cv(data, config.lambda, config.folds, &grid, config.seed)
        }
        Method::SeededCv => {
            select_seeded_cv(data, config.lambda, config.folds, config.grid_size, config.seed)
        }
    }
}
