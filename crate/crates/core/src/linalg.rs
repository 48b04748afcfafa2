//! Dense SPD solves for the shifted kernel system and symmetric spectra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest matrix accepted by the eigen routines.
pub const MAX_EIGEN_DIM: usize = 500;

/// Cholesky factorization of `K + λI`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdSolve {
    factor: DMatrix<f64>,
    shift: f64,
}

/// Factors `K + λI = L·Lᵀ`.
///
/// Fails with [`Error::NotPositiveDefinite`] carrying the 1-based index of
/// the first non-positive pivot. The shift is never increased behind the
/// caller's back.
pub fn factor_spd(k: &DMatrix<f64>, lambda: f64) -> Result<SpdSolve> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.ncols(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "regularization must be finite and non-negative, got {lambda}"
        )));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = k[(j, j)] + lambda;
        for c in 0..j {
            diag -= l[(j, c)] * l[(j, c)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j + 1,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = k[(i, j)];
            for c in 0..j {
                v -= l[(i, c)] * l[(j, c)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(SpdSolve {
        factor: l,
        shift: lambda,
    })
}

impl SpdSolve {
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Solves `(K + λI)·x = b` by forward then backward substitution.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let l = &self.factor;
        let mut z = b.clone();
        for i in 0..n {
            let mut v = z[i];
            for c in 0..i {
                v -= l[(i, c)] * z[c];
            }
            z[i] = v / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for r in i + 1..n {
                v -= l[(r, i)] * z[r];
            }
            z[i] = v / l[(i, i)];
        }
        Ok(z)
    }
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::Degenerate("empty matrix has no spectrum".into()));
    }
    if n > MAX_EIGEN_DIM {
        return Err(Error::InvalidArgument(format!(
            "eigen routines are limited to n <= {MAX_EIGEN_DIM}, got {n}"
        )));
    }
    m.clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .map(|e| e.eigenvalues)
        .ok_or(Error::EigenNotConverged)
}

/// All singular values of a symmetric matrix, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = symmetric_eigenvalues(m)?.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `(s_max, s_min)` of a symmetric PSD matrix.
pub fn singular_extremes(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    let s = singular_values(m)?;
    Ok((s[0], s[s.len() - 1]))
}
