//! Principal branch of the Lambert W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// `-1/e`, the left end of the principal branch.
pub const BRANCH_POINT: f64 = -1.0 / E;

const MAX_ITER: usize = 50;

/// Residual bound `|w e^w - x| <= RESIDUAL_TOL * max(1, |x|)` every result satisfies.
pub const RESIDUAL_TOL: f64 = 1e-12;

fn initial_guess(x: f64) -> f64 {
    if x >= 0.0 {
        x.ln_1p()
    } else {
        // branch-point series in p = sqrt(2 (e x + 1))
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    }
}

/// `W_0(x)`: the `w >= -1` with `w e^w = x`, for `x >= -1/e`.
///
/// Halley iteration from [`initial_guess`]. Iteration stops when the step
/// falls below a few ulps of `w`, or one step after the residual drops to
/// `1e-13 * max(1, |x|)`. A result whose residual exceeds [`RESIDUAL_TOL`]
/// is reported as [`Error::NoConvergence`].
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < BRANCH_POINT {
        return Err(Error::Domain(format!("lambert W0 is undefined below -1/e, got {x}")));
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let scale = x.abs().max(1.0);
    let mut w = initial_guess(x);
    let mut polish = false;
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (wp1 + 1.0) * f / (2.0 * wp1));
        w -= step;
        if w < -1.0 {
            w = -1.0;
        }
        if polish || step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
        if f.abs() <= 1e-13 * scale {
            polish = true;
        }
    }

    if (w * w.exp() - x).abs() <= RESIDUAL_TOL * scale {
        Ok(w)
    } else {
        Err(Error::NoConvergence(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defining_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0);
        // omega constant, frozen from the bisection oracle
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_784).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w0(-0.5).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
        assert!(lambert_w0(BRANCH_POINT - 1e-12).is_err());
    }

    #[test]
    fn near_branch_point() {
        for off in [1e-15, 1e-12, 1e-9, 1e-6, 1e-3] {
            let x = BRANCH_POINT + off;
            let w = lambert_w0(x).unwrap();
            assert!(w >= -1.0);
            assert!((w * w.exp() - x).abs() <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn large_arguments() {
        for x in [1e3, 1e6, 1e12, 1e100, 1e300] {
            let w = lambert_w0(x).unwrap();
            // w = ln x - ln w
            assert!((w + w.ln() - x.ln()).abs() < 1e-12 * x.ln(), "x={x} w={w}");
        }
        assert_eq!(lambert_w0(f64::INFINITY).unwrap(), f64::INFINITY);
    }

    #[test]
    fn monotone_on_grid() {
        let mut prev = -1.0;
        let mut x = BRANCH_POINT + 1e-9;
        while x < 1e4 {
            let w = lambert_w0(x).unwrap();
            assert!(w > prev, "x={x}");
            prev = w;
            x = x + (x.abs() * 0.05).max(1e-4);
        }
    }
}
