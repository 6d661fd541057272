//! Lower real branch `W_{-1}` of the Lambert W function on `[-1/e, 0)`.

use crate::error::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;
const MAX_HALLEY_STEPS: usize = 50;
const RESIDUAL_TOL: f64 = 1e-12;

/// Returns `w <= -1` with `w e^w = x`.
///
/// Halley iteration from a branch-point series (near `-1/e`) or the
/// logarithmic asymptote (near `0`); bisection on `[-745, -1]` if Halley
/// fails to reach the residual tolerance.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    // Allow one rounding step below -1/e; callers evaluate (t-1)e^(t-1) which
    // can land there.
    if !x.is_finite() || x >= 0.0 || x < -INV_E * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::Domain(format!("W_-1 is defined on [-1/e, 0), got {x}")));
    }
    let q = std::f64::consts::E * x + 1.0;
    if q <= 0.0 {
        return Ok(-1.0);
    }

    let mut w = initial_guess(x, q);
    for _ in 0..MAX_HALLEY_STEPS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = (w - step).min(-1.0);
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * w.abs();
        w = next;
        if done {
            break;
        }
    }
    if w.is_finite() && (w * w.exp() - x).abs() <= RESIDUAL_TOL {
        return Ok(w);
    }
    Ok(bisect(x))
}

fn initial_guess(x: f64, q: f64) -> f64 {
    if x < -0.25 {
        // series in p = -sqrt(2(ex + 1)) about the branch point
        let p = -(2.0 * q).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

/// `w e^w` is decreasing on `(-inf, -1]`, from `0^-` down to `-1/e`.
fn bisect(x: f64) -> f64 {
    let (mut lo, mut hi) = (-745.0f64, -1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mid * mid.exp() - x > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
