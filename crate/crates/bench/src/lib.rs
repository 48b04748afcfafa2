//! Shared fixtures for the criterion benchmarks.

use krrbw::data::generate_synthetic;
use krrbw::Dataset;

/// Synthetic sine data of size `n` with the default noise level.
pub fn sine_fixture(n: usize) -> Dataset {
    generate_synthetic(n, 0.1, 42).expect("n >= 1")
}
