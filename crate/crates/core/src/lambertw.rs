//! Real Lambert W on `[-1/e, 0]`, the inverse of `w ↦ w·eʷ`.
//!
//! Only the two real branches are provided: the principal branch `W₀`
//! (values in `[-1, 0]`) and the lower branch `W₋₁` (values in `(-∞, -1]`).
//! Both are refined with Halley's method from branch-specific starting
//! points.

use std::f64::consts::E;

use crate::error::{Error, Result};

const INV_E: f64 = 1.0 / E;
const MAX_ITER: usize = 50;
const STEP_TOL: f64 = 1e-13;
/// Arguments this far below `-1/e` are treated as `-1/e`.
const BRANCH_POINT_SLACK: f64 = 1e-15;

/// Real branch of the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `W₀`, the branch through the origin.
    Principal,
    /// `W₋₁`, the lower branch diverging to `-∞` as `x → 0⁻`.
    Negative,
}

/// Evaluates `W_k(x)` for `x` in `[-1/e, 0]` (`[-1/e, 0)` on the lower branch).
pub fn lambert_w(x: f64, branch: Branch) -> Result<f64> {
    let domain = || Error::LambertDomain { x, branch };
    if x.is_nan() || !(-INV_E - BRANCH_POINT_SLACK..=0.0).contains(&x) {
        return Err(domain());
    }
    let x = x.max(-INV_E);
    if x == -INV_E {
        return Ok(-1.0);
    }
    match branch {
        Branch::Principal if x == 0.0 => return Ok(0.0),
        Branch::Negative if x == 0.0 => return Err(domain()),
        _ => {}
    }

    let mut w = initial_guess(x, branch);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        // Halley can overshoot past the branch point when started very close to it.
        w = match branch {
            Branch::Principal => next.max(-1.0),
            Branch::Negative => next.min(-1.0),
        };
        if step.abs() <= STEP_TOL * w.abs().max(1.0) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64, branch: Branch) -> f64 {
    // Expansion in p = sqrt(2(1 + e·x)) around the branch point.
    let p = (2.0 * (1.0 + E * x)).max(0.0).sqrt();
    match branch {
        Branch::Principal if x < -0.25 => -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p,
        Branch::Principal => x * (1.0 - x * (1.0 - 1.5 * x)),
        Branch::Negative if x < -0.25 => -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p,
        Branch::Negative => {
            let l1 = (-x).ln();
            let l2 = (-l1).ln();
            l1 - l2 + l2 / l1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(w: f64, x: f64) -> f64 {
        (w * w.exp() - x).abs()
    }

    #[test]
    fn fixed_points() {
        assert_eq!(lambert_w(0.0, Branch::Principal).unwrap(), 0.0);
        assert_eq!(lambert_w(-INV_E, Branch::Principal).unwrap(), -1.0);
        assert_eq!(lambert_w(-INV_E, Branch::Negative).unwrap(), -1.0);
    }

    #[test]
    fn lower_branch_matches_bisection() {
        // w·eʷ decreases on (-∞, -1) from 0⁻ to -1/e, so (-20, -1) brackets the root.
        let x = -0.1;
        let (mut lo, mut hi) = (-20.0f64, -1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = lambert_w(x, Branch::Negative).unwrap();
        assert!(w < -1.0);
        assert!((w - 0.5 * (lo + hi)).abs() < 1e-12, "{w} vs {lo}");
        // Published value W₋₁(-0.1) = -3.577152063957297...
        assert!((w + 3.577_152_063_957_297).abs() < 1e-12);
    }

    #[test]
    fn principal_reference_value() {
        // W₀(-0.1) = -0.11183255915896297...
        let w = lambert_w(-0.1, Branch::Principal).unwrap();
        assert!((w + 0.111_832_559_158_962_97).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w(0.1, Branch::Principal).is_err());
        assert!(lambert_w(-0.5, Branch::Principal).is_err());
        assert!(lambert_w(0.0, Branch::Negative).is_err());
        assert!(lambert_w(f64::NAN, Branch::Negative).is_err());
    }

    #[test]
    fn spill_below_branch_point_is_clamped() {
        let x = -INV_E - 5e-16;
        assert_eq!(lambert_w(x, Branch::Principal).unwrap(), -1.0);
        assert_eq!(lambert_w(x, Branch::Negative).unwrap(), -1.0);
        assert!(lambert_w(-INV_E - 1e-13, Branch::Principal).is_err());
    }

    #[test]
    fn round_trip_dense_grid() {
        let m = 10_000;
        for branch in [Branch::Principal, Branch::Negative] {
            for i in 1..m {
                let x = -INV_E + INV_E * i as f64 / m as f64;
                let w = lambert_w(x, branch).unwrap();
                assert!(residual(w, x) <= 1e-12 * x.abs().max(1e-300), "{branch:?} x={x} w={w}");
            }
        }
    }

    #[test]
    fn tiny_arguments() {
        for x in [-1e-300, -1e-100, -1e-20, -1e-8] {
            let w0 = lambert_w(x, Branch::Principal).unwrap();
            let wm = lambert_w(x, Branch::Negative).unwrap();
            assert!(residual(w0, x) <= 1e-12 * x.abs());
            assert!(residual(wm, x) <= 1e-12 * x.abs(), "x={x} w={wm}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn branches_ordered_and_monotone(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                prop_assume!(b - a > 1e-9);
                let xa = -INV_E * a;
                let xb = -INV_E * b;
                let w0a = lambert_w(xa, Branch::Principal).unwrap();
                let w0b = lambert_w(xb, Branch::Principal).unwrap();
                let wma = lambert_w(xa, Branch::Negative).unwrap();
                let wmb = lambert_w(xb, Branch::Negative).unwrap();
                prop_assert!(wma < w0a && wmb < w0b);
                // xb < xa: W₀ increasing, W₋₁ decreasing.
                prop_assert!(w0b < w0a);
                prop_assert!(wmb > wma);
                prop_assert!((-1.0..=0.0).contains(&w0a));
                prop_assert!(wma <= -1.0);
            }
        }
    }
}
