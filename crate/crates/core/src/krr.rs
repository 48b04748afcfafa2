//! Gaussian kernel ridge regression.
//!
//! A fitted model predicts `f(x*) = K(x*, X)·α` with dual coefficients
//! `α = (K(X, X) + λI)⁻¹·y`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{format_float, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{check_sigma, gram, kernel_matrix};
use crate::linalg::factor_spd;

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    train_features: DMatrix<f64>,
    alpha: DVector<f64>,
    sigma: f64,
    lambda: f64,
}

/// Fits the model on `data` with bandwidth `sigma` and ridge `lambda`.
///
/// With `lambda == 0` duplicate rows make `K` singular and the fit fails;
/// no pseudo-inverse fallback is attempted.
pub fn fit(data: &Dataset, sigma: f64, lambda: f64) -> Result<KrrModel> {
    check_sigma(sigma)?;
    let k = gram(data.features(), sigma)?;
    let alpha = factor_spd(&k, lambda)?.solve(data.response())?;
    Ok(KrrModel {
        train_features: data.features().clone(),
        alpha,
        sigma,
        lambda,
    })
}

/// Central-difference step used when the caller does not pick one.
pub fn default_fd_step(x_star: &[f64]) -> f64 {
    1e-5 * x_star.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

impl KrrModel {
    pub fn from_parts(
        train_features: DMatrix<f64>,
        alpha: DVector<f64>,
        sigma: f64,
        lambda: f64,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        if alpha.len() != train_features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: train_features.nrows(),
                found: alpha.len(),
            });
        }
        Ok(Self {
            train_features,
            alpha,
            sigma,
            lambda,
        })
    }

    pub fn train_features(&self) -> &DMatrix<f64> {
        &self.train_features
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.train_features.nrows()
    }

    pub fn p(&self) -> usize {
        self.train_features.ncols()
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x_new.ncols() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x_new.ncols(),
            });
        }
        if x_new.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        Ok(kernel_matrix(x_new, &self.train_features, self.sigma)? * &self.alpha)
    }

    /// Single-point prediction with distances taken as plain differences.
    pub fn evaluate(&self, x_star: &[f64]) -> Result<f64> {
        if x_star.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x_star.len(),
            });
        }
        let two_s2 = 2.0 * self.sigma * self.sigma;
        Ok((0..self.n())
            .map(|i| {
                let d2: f64 = x_star
                    .iter()
                    .enumerate()
                    .map(|(c, v)| (v - self.train_features[(i, c)]).powi(2))
                    .sum();
                self.alpha[i] * (-d2 / two_s2).exp()
            })
            .sum())
    }

    /// Central finite-difference gradient of the fitted function at `x_star`.
    pub fn gradient_fd(&self, x_star: &[f64], step: f64) -> Result<DVector<f64>> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        let mut probe = x_star.to_vec();
        let mut grad = DVector::zeros(x_star.len());
        for c in 0..x_star.len() {
            probe[c] = x_star[c] + step;
            let hi = self.evaluate(&probe)?;
            probe[c] = x_star[c] - step;
            let lo = self.evaluate(&probe)?;
            probe[c] = x_star[c];
            grad[c] = (hi - lo) / (2.0 * step);
        }
        Ok(grad)
    }

    /// Writes the model as tagged CSV sections: `[meta]`, `[train_features]`, `[alpha]`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let io_err = |e: std::io::Error| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        self.write_to(&mut out).map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn write_to<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "[meta]")?;
        writeln!(out, "n,p,sigma,lambda")?;
        writeln!(
            out,
            "{},{},{},{}",
            self.n(),
            self.p(),
            format_float(self.sigma),
            format_float(self.lambda)
        )?;
        writeln!(out, "[train_features]")?;
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.p())
                .map(|c| format_float(self.train_features[(i, c)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        writeln!(out, "[alpha]")?;
        for a in self.alpha.iter() {
            writeln!(out, "{}", format_float(*a))?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let line = line.trim().to_string();
            if !line.is_empty() {
                lines.push(line);
            }
        }
        Self::parse(&lines)
    }

    fn parse(lines: &[String]) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let section = |tag: &str| {
            lines
                .iter()
                .position(|l| l == tag)
                .ok_or_else(|| bad(&format!("missing {tag} section")))
        };
        let meta_at = section("[meta]")?;
        let feat_at = section("[train_features]")?;
        let alpha_at = section("[alpha]")?;
        if !(meta_at < feat_at && feat_at < alpha_at) || feat_at != meta_at + 3 {
            return Err(bad("sections out of order"));
        }
        let meta: Vec<&str> = lines[meta_at + 2].split(',').collect();
        if meta.len() != 4 {
            return Err(bad("meta row needs n,p,sigma,lambda"));
        }
        let n: usize = meta[0].parse().map_err(|_| bad("n is not an integer"))?;
        let p: usize = meta[1].parse().map_err(|_| bad("p is not an integer"))?;
        let sigma: f64 = meta[2].parse().map_err(|_| bad("sigma is not a number"))?;
        let lambda: f64 = meta[3].parse().map_err(|_| bad("lambda is not a number"))?;

        let feat_rows = &lines[feat_at + 1..alpha_at];
        let alpha_rows = &lines[alpha_at + 1..];
        if feat_rows.len() != n || alpha_rows.len() != n {
            return Err(bad("row counts disagree with n"));
        }
        let mut values = Vec::with_capacity(n * p);
        for row in feat_rows {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != p {
                return Err(bad("feature row width disagrees with p"));
            }
            for f in fields {
                values.push(f.parse::<f64>().map_err(|_| bad("feature is not a number"))?);
            }
        }
        let alpha: Vec<f64> = alpha_rows
            .iter()
            .map(|r| r.parse::<f64>().map_err(|_| bad("alpha is not a number")))
            .collect::<Result<_>>()?;
        Self::from_parts(
            DMatrix::from_row_slice(n, p, &values),
            DVector::from_vec(alpha),
            sigma,
            lambda,
        )
    }
}
