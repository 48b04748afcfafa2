//! Numerical checks of the inequalities behind the approximate Jacobian norm.
//!
//! Each check returns a [`BoundReport`] with a signed `worst_margin`:
//! non-negative when every trial satisfied the claim, negative otherwise.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::bandwidth::{log_space, JacobianParams, Regime};
use crate::data::{format_float, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{check_sigma, gram, kernel_gradient_cap, kernel_gradient_norm, max_pairwise_distance};
use crate::krr::{self, default_fd_step};
use crate::lambertw::Branch;
use crate::linalg::{singular_extremes, singular_values};
use crate::rng::{derive_seed, seeded};

/// Relative slack allowed on the gradient bound chain (finite-difference noise).
pub const CHAIN_REL_TOL: f64 = 1e-8;
/// Points in the log grid used for the regime shape checks.
pub const PROP1_GRID: usize = 1000;
/// Grid resolution for the kernel-gradient maximum check.
pub const PROP3_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Claim {
    /// Shape of `J(σ)` in each λ regime.
    Prop1Regimes,
    /// `‖∇f(x*)‖₂ ≤ √n·‖y‖₂ · maxᵢ‖∂k(x*, xᵢ)/∂x*‖₁ · ‖(K + λI)⁻¹‖₂`.
    Prop2Chain,
    /// `maxᵈ (d/σ²)·exp(-d²/(2σ²)) = 1/(σ√e)`, attained at `d = σ`.
    Prop3GradMax,
    /// `‖(K + λI)⁻¹‖₂ ≥ j_b(σ)`.
    Prop4InverseNorm,
    /// Count of singular values with `s_j/s_1 ≥ δ` against its closed-form bound.
    BermanisCount,
}

impl Claim {
    pub fn name(&self) -> &'static str {
        match self {
            Claim::Prop1Regimes => "prop1",
            Claim::Prop2Chain => "prop2",
            Claim::Prop3GradMax => "prop3",
            Claim::Prop4InverseNorm => "prop4",
            Claim::BermanisCount => "bermanis",
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub claim: Claim,
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub seed: u64,
    /// Parameter summary; together with `seed` it reproduces the report.
    pub config: String,
}

impl BoundReport {
    fn from_margins(claim: Claim, margins: &[f64], seed: u64, config: String) -> Self {
        Self {
            claim,
            trials: margins.len(),
            violations: margins.iter().filter(|m| **m < 0.0 || m.is_nan()).count(),
            worst_margin: margins.iter().copied().fold(f64::INFINITY, |a, b| {
                if b.is_nan() { f64::NEG_INFINITY } else { a.min(b) }
            }),
            seed,
            config,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub const CSV_HEADER: &'static str = "claim,trials,violations,worst_margin,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.claim,
            self.trials,
            self.violations,
            format_float(self.worst_margin),
            self.seed
        )
    }
}

pub fn write_reports_csv<W: Write + ?Sized>(out: &mut W, reports: &[BoundReport]) -> std::io::Result<()> {
    writeln!(out, "{}", BoundReport::CSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Checks the shape of `J(σ)` on a log grid over `[1e-3, 1e3]·l_max`.
///
/// Between turning points `ln J` must move strictly in the predicted
/// direction, and each discrete extremum must sit within one grid cell of
/// the closed-form `σ₀` (minimum) or `σ₋₁` (maximum).
pub fn check_prop1_regimes(params: &JacobianParams) -> BoundReport {
    let l = params.l_max();
    let grid = log_space(1e-3 * l, 1e3 * l, PROP1_GRID);
    let cell = (1e6f64).ln() / (PROP1_GRID - 1) as f64;
    let ln_j: Vec<f64> = grid.iter().map(|&s| params.ln_norm(s)).collect();

    // (σ, +1 for a minimum / -1 for a maximum)
    let mut turns: Vec<(f64, f64)> = Vec::new();
    match params.regime() {
        Regime::NoRegularization => {
            turns.push((params.stationary_sigma(Branch::Principal).expect("λ = 0"), 1.0));
        }
        Regime::LocalMinimum => {
            let s0 = params.stationary_sigma(Branch::Principal).expect("below threshold");
            let sm = params.stationary_sigma(Branch::Negative).expect("λ > 0");
            // At the threshold the two merge into an inflection point.
            if (sm / s0).ln() > 2.0 * cell {
                turns.push((s0, 1.0));
                turns.push((sm, -1.0));
            } else {
                turns.push((s0.sqrt() * sm.sqrt(), 0.0));
            }
        }
        Regime::Monotone => {}
    }

    let near = |s: f64, t: f64| (s / t).ln().abs() <= cell;
    let mut margins = Vec::with_capacity(grid.len() + turns.len());
    for i in 0..grid.len() - 1 {
        if turns.iter().any(|&(t, _)| near(grid[i], t) || near(grid[i + 1], t)) {
            continue;
        }
        // J falls from +∞ until the minimum, rises until the maximum (if
        // any), then falls again.
        let passed = turns.iter().filter(|&&(t, kind)| kind != 0.0 && t < grid[i]).count();
        let rising = passed == 1;
        let diff = ln_j[i + 1] - ln_j[i];
        margins.push(if rising { diff } else { -diff });
    }
    for &(t, kind) in &turns {
        if kind == 0.0 || t < grid[0] || t > grid[grid.len() - 1] {
            continue;
        }
        let window: Vec<usize> = (0..grid.len()).filter(|&i| (grid[i] / t).ln().abs() <= 3.0 * cell).collect();
        let best = window
            .iter()
            .copied()
            .min_by(|&a, &b| (kind * ln_j[a]).total_cmp(&(kind * ln_j[b])))
            .expect("turning point lies inside the grid");
        margins.push(cell - (grid[best] / t).ln().abs());
    }

    let config = format!(
        "n={},p={},l_max={},lambda={},regime={}",
        params.n(),
        params.p(),
        l,
        params.lambda(),
        params.regime().name()
    );
    BoundReport::from_margins(Claim::Prop1Regimes, &margins, 0, config)
}

/// Grid check that the kernel gradient magnitude peaks at `1/(σ√e)` at `d = σ`.
pub fn check_prop3_grad_max(sigma: f64) -> Result<BoundReport> {
    check_sigma(sigma)?;
    let cap = kernel_gradient_cap(sigma);
    let step = 10.0 * sigma / PROP3_GRID as f64;
    let mut margins = Vec::with_capacity(PROP3_GRID + 3);
    let (mut best_d, mut best) = (0.0, f64::NEG_INFINITY);
    for i in 0..=PROP3_GRID {
        let d = step * i as f64;
        let g = kernel_gradient_norm(d, sigma)?;
        margins.push((cap * (1.0 + 1e-12) - g) / cap);
        if g > best {
            best = g;
            best_d = d;
        }
    }
    margins.push(1e-6 - (best - cap).abs() / cap);
    margins.push(step - (best_d - sigma).abs());
    Ok(BoundReport::from_margins(
        Claim::Prop3GradMax,
        &margins,
        0,
        format!("sigma={sigma},grid={PROP3_GRID}"),
    ))
}

/// Middle factor used in the gradient bound chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiddleFactor {
    /// `maxᵢ (k(x*, xᵢ)/σ²)·‖x* - xᵢ‖₁`, the exact 1-norm of each kernel gradient.
    Exact,
    /// The uniform cap `1/(σ√e)`.
    Cap,
}

/// Random-probe check of the gradient bound chain for KRR fitted on `data`.
///
/// Probes are uniform in the bounding box of the training inputs widened by
/// 10% of its extent on each side (by σ where the extent is zero). The
/// gradient is a central difference with step `min(1e-5·max(1, ‖x*‖∞), 1e-3·σ)`.
/// Margins are relative: `((1 + tol)·bound - ‖∇f‖₂) / bound`.
pub fn check_prop2_chain(
    data: &Dataset,
    sigma: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_chain(data, sigma, lambda, trials, seed, MiddleFactor::Exact)
}

pub fn check_chain(
    data: &Dataset,
    sigma: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
    middle: MiddleFactor,
) -> Result<BoundReport> {
    let model = krr::fit(data, sigma, lambda)?;
    let (_, s_min) = singular_extremes(&gram(data.features(), sigma)?)?;
    let inv_norm = 1.0 / (s_min + lambda);
    let n = data.n();
    let p = data.p();
    let y_factor = (n as f64).sqrt() * data.response().norm();

    let x = data.features();
    let bounds: Vec<(f64, f64)> = (0..p)
        .map(|c| {
            let col = x.column(c);
            let lo = col.min();
            let hi = col.max();
            let pad = if hi > lo { 0.1 * (hi - lo) } else { sigma };
            (lo - pad, hi + pad)
        })
        .collect();

    let margins: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut r = seeded(derive_seed(seed, &[t as u64]));
            let x_star: Vec<f64> = bounds.iter().map(|&(lo, hi)| r.random_range(lo..=hi)).collect();
            let step = default_fd_step(&x_star).min(1e-3 * sigma);
            let grad = model.gradient_fd(&x_star, step)?.norm();
            let mid = match middle {
                MiddleFactor::Exact => (0..n)
                    .map(|i| {
                        let mut d2 = 0.0;
                        let mut l1 = 0.0;
                        for c in 0..p {
                            let d = x_star[c] - x[(i, c)];
                            d2 += d * d;
                            l1 += d.abs();
                        }
                        (-d2 / (2.0 * sigma * sigma)).exp() * l1 / (sigma * sigma)
                    })
                    .fold(0.0, f64::max),
                MiddleFactor::Cap => kernel_gradient_cap(sigma),
            };
            let bound = y_factor * mid * inv_norm;
            Ok(if bound > 0.0 {
                ((1.0 + CHAIN_REL_TOL) * bound - grad) / bound
            } else if grad == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            })
        })
        .collect::<Result<_>>()?;

    let claim = match middle {
        MiddleFactor::Exact => Claim::Prop2Chain,
        MiddleFactor::Cap => Claim::Prop3GradMax,
    };
    Ok(BoundReport::from_margins(
        claim,
        &margins,
        seed,
        format!("n={n},p={p},sigma={sigma},lambda={lambda},middle={middle:?}"),
    ))
}

/// Both sides of the inverse-norm lower bound for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseNormMeasurement {
    pub s_max: f64,
    pub s_min: f64,
    /// `1/(s_min(K) + λ)`; infinite when `K + λI` is numerically singular.
    pub inverse_norm: f64,
    /// `j_b(σ)`.
    pub lower_bound: f64,
}

impl InverseNormMeasurement {
    /// `inverse_norm - lower_bound`; `-inf` when `j_b` overflows while
    /// `K + λI` is still numerically invertible.
    pub fn margin(&self) -> f64 {
        self.inverse_norm - self.lower_bound
    }

    /// Whether `s_min` is resolved above the eigen-solver's rounding floor
    /// (about `n·ε·s_max`), so a negative margin is not a rounding artifact.
    pub fn s_min_resolved(&self, n: usize) -> bool {
        self.s_min > 1e3 * n as f64 * f64::EPSILON * self.s_max
    }
}

pub fn measure_prop4(x: &DMatrix<f64>, sigma: f64, lambda: f64) -> Result<InverseNormMeasurement> {
    let params = JacobianParams::from_features(x, lambda)?;
    check_sigma(sigma)?;
    let (s_max, s_min) = singular_extremes(&gram(x, sigma)?)?;
    Ok(InverseNormMeasurement {
        s_max,
        s_min,
        inverse_norm: 1.0 / (s_min + lambda),
        lower_bound: params.j_b(sigma),
    })
}

/// Compares `‖(K + λI)⁻¹‖₂` with `j_b(σ)`; margin = lhs − rhs.
pub fn check_prop4(x: &DMatrix<f64>, sigma: f64, lambda: f64) -> Result<BoundReport> {
    let m = measure_prop4(x, sigma, lambda)?;
    Ok(BoundReport::from_margins(
        Claim::Prop4InverseNorm,
        &[m.margin()],
        0,
        format!("n={},p={},sigma={sigma},lambda={lambda}", x.nrows(), x.ncols()),
    ))
}

/// Counts `s_j/s_1 ≥ δ` for `K(x, x, σ)` against
/// `((2/π)·(l_max/σ)·sqrt(ln(1/δ)) + 1)^p`; margin = bound − count.
pub fn check_bermanis_count(x: &DMatrix<f64>, sigma: f64, delta: f64) -> Result<BoundReport> {
    check_sigma(sigma)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let s = singular_values(&gram(x, sigma)?)?;
    let count = s.iter().filter(|&&v| v / s[0] >= delta).count();
    let l_max = max_pairwise_distance(x);
    let bound = (2.0 / std::f64::consts::PI * l_max / sigma * (1.0 / delta).ln().sqrt() + 1.0)
        .powi(x.ncols() as i32);
    Ok(BoundReport::from_margins(
        Claim::BermanisCount,
        &[bound - count as f64],
        0,
        format!("n={},p={},sigma={sigma},delta={delta}", x.nrows(), x.ncols()),
    ))
}
