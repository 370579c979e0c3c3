// SPDX-License-Identifier: Apache-2.0

//! Deterministic bracketed root finding.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 200;

/// Bisection on `[lo, hi]`, which must bracket a sign change.
///
/// Stops when `f` is exactly zero, when the bracket width falls below
/// `tol * max(1, |mid|)`, or after [`MAX_ITER`] halvings (by then the
/// bracket is at floating-point resolution).
pub fn find_root_bracketed<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        if b - a <= tol * mid.abs().max(1.0) || mid <= a || mid >= b {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Moves `lo` away from `hi` by doubling steps until `f(lo)` has the opposite
/// sign of `f(hi)`, then bisects. Used when one end of the bracket is only
/// known to lie at infinity.
pub fn find_root_expanding<F>(f: F, fixed: f64, first_step: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let f_fixed = f(fixed);
    if f_fixed == 0.0 {
        return Ok(fixed);
    }
    let mut step = first_step;
    for _ in 0..64 {
        let other = fixed + step;
        let fo = f(other);
        if fo == 0.0 {
            return Ok(other);
        }
        if !fo.is_nan() && fo.signum() != f_fixed.signum() {
            return find_root_bracketed(&f, fixed.min(other), fixed.max(other), tol);
        }
        step *= 2.0;
    }
    Err(Error::NoSignChange {
        lo: fixed.min(fixed + step),
        hi: fixed.max(fixed + step),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_root() {
        let y = find_root_bracketed(|y| y - 0.5, 0.0, 1.0, DEFAULT_TOL).unwrap();
        assert_eq!(y, 0.5);
    }

    #[test]
    fn sqrt_two() {
        let y = find_root_bracketed(|y| y * y - 2.0, 1.0, 2.0, DEFAULT_TOL).unwrap();
        assert!((y - std::f64::consts::SQRT_2).abs() < 4e-12);
    }

    #[test]
    fn root_at_bracket_end() {
        let y = find_root_bracketed(|y| y - 1.0, 0.0, 1.0, DEFAULT_TOL).unwrap();
        assert_eq!(y, 1.0);
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let err = find_root_bracketed(|y| y * y + 1.0, -1.0, 1.0, DEFAULT_TOL).unwrap_err();
        assert!(err.to_string().contains("no sign change"));
        assert!(err.is_numerical());
    }

    #[test]
    fn expanding_bracket_finds_far_root() {
        let y = find_root_expanding(|z| z + 37.25, 0.0, -1.0, DEFAULT_TOL).unwrap();
        assert!((y + 37.25).abs() < 1e-10);
    }
}
