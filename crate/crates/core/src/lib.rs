//! # krrbw
//!
//! Gaussian kernel ridge regression (KRR) with bandwidth selection.
//!
//! The centerpiece is a closed-form bandwidth selector that minimizes an
//! approximation of the norm of the derivative of the fitted function with
//! respect to its input. That approximation factors as
//!
//! ```text
//! J(σ) = j_a(σ) · j_b(σ),   j_a(σ) = 1/σ,
//! j_b(σ) = 1 / (n·exp(-(((n-1)^(1/p) - 1)·π·σ / (2·l_max))²) + λ)
//! ```
//!
//! where `l_max` is the largest pairwise distance between training inputs.
//! Its stationary points are available in closed form through the two real
//! branches of the Lambert W function, so selection costs one O(n²p)
//! diameter scan.
//!
//! Alongside it live the usual baselines (Silverman's rule, k-fold grid
//! cross-validation and cross-validation seeded by the closed-form value),
//! numerical checks of the bounds the approximation rests on, and an
//! experiment harness for resampling comparisons.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`data`] | datasets, CSV, synthetic data, fold/jackknife index plans |
//! | [`kernel`] | Gaussian kernel, kernel matrices, data diameter |
//! | [`linalg`] | Cholesky solves and extreme singular values |
//! | [`lambertw`] | real Lambert W on `[-1/e, 0]` |
//! | [`bandwidth`] | the four bandwidth selectors |
//! | [`krr`] | fit, predict, finite-difference gradients, model files |
//! | [`verify`] | numerical checks of the bound chain |
//! | [`eval`] | R², jackknife and sweep experiments |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod krr;
pub mod lambertw;
pub mod linalg;
pub mod rng;
pub mod verify;

pub use bandwidth::{
    BandwidthResult, JacobianParams, Method, Regime, SelectionConfig,
};
pub use data::{Dataset, SplitPlan};
pub use error::{Error, Result};
pub use eval::{JackknifeReport, SweepReport};
pub use krr::KrrModel;
pub use lambertw::Branch;
pub use verify::{BoundReport, Claim};

pub use nalgebra::{DMatrix, DVector};
