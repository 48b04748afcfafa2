//! Gaussian kernel `k(d, σ) = exp(-‖d‖² / (2σ²))` and kernel matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per parallel chunk when building kernel matrices.
const PAR_ROWS: usize = 64;

/// A validated Gaussian bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    sigma: f64,
}

impl KernelConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "bandwidth must be finite and positive, got {sigma}"
        )))
    }
}

#[inline]
fn gaussian_unchecked(d_squared: f64, sigma: f64) -> f64 {
    (-d_squared / (2.0 * sigma * sigma)).exp()
}

pub fn gaussian(d_squared: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(d_squared >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "squared distance must be non-negative, got {d_squared}"
        )));
    }
    Ok(gaussian_unchecked(d_squared, sigma))
}

fn row_sq_norms(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v * v).sum())
        .collect()
}

/// Squared distance through `‖a‖² + ‖b‖² - 2a·b`, clamped at zero.
#[inline]
fn expanded_sq_dist(a: &DMatrix<f64>, i: usize, na: f64, b: &DMatrix<f64>, j: usize, nb: f64) -> f64 {
    let mut dot = 0.0;
    for c in 0..a.ncols() {
        dot += a[(i, c)] * b[(j, c)];
    }
    (na + nb - 2.0 * dot).max(0.0)
}

/// `K[i, j] = k(a_i, b_j)` for rows of `a` (m × p) and `b` (n × p).
///
/// When `a` and `b` are the same matrix this delegates to [`gram`], which is
/// exactly symmetric with a unit diagonal.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: b.ncols(),
            found: a.ncols(),
        });
    }
    if std::ptr::eq(a, b) {
        return gram(a, sigma);
    }
    let (m, n) = (a.nrows(), b.nrows());
    let na = row_sq_norms(a);
    let nb = row_sq_norms(b);
    let mut rows = vec![0.0; m * n];
    if n > 0 {
        rows.par_chunks_mut(n * PAR_ROWS)
            .enumerate()
            .for_each(|(chunk, out)| {
                for (r, row) in out.chunks_mut(n).enumerate() {
                    let i = chunk * PAR_ROWS + r;
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = gaussian_unchecked(expanded_sq_dist(a, i, na[i], b, j, nb[j]), sigma);
                    }
                }
            });
    }
    Ok(DMatrix::from_row_slice(m, n, &rows))
}

/// Symmetric kernel matrix of `x` with itself.
///
/// The upper triangle is computed and mirrored, and the diagonal is set to
/// exactly one.
pub fn gram(x: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let n = x.nrows();
    let norms = row_sq_norms(x);
    let mut rows = vec![0.0; n * n];
    if n > 0 {
        rows.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            row[i] = 1.0;
            for j in i + 1..n {
                row[j] = gaussian_unchecked(expanded_sq_dist(x, i, norms[i], x, j, norms[j]), sigma);
            }
        });
    }
    let mut k = DMatrix::from_row_slice(n, n, &rows);
    for i in 0..n {
        for j in i + 1..n {
            k[(j, i)] = k[(i, j)];
        }
    }
    Ok(k)
}

/// Largest Euclidean distance between two rows of `x`; zero for a single row.
pub fn max_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = (0..x.ncols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Magnitude of the radial derivative of the kernel at distance `d`,
/// `(d/σ²)·exp(-d²/(2σ²))`. Its maximum over `d` is `1/(σ√e)`, at `d = σ`.
pub fn kernel_gradient_norm(d: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance must be non-negative, got {d}"
        )));
    }
    Ok(d / (sigma * sigma) * gaussian_unchecked(d * d, sigma))
}

/// `1/(σ√e)`, the largest value [`kernel_gradient_norm`] can take.
pub fn kernel_gradient_cap(sigma: f64) -> f64 {
    1.0 / (sigma * std::f64::consts::E.sqrt())
}
