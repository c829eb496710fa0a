//! Root finding for strictly increasing lifts.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Solves `h(x) = target` for a strictly increasing `h` on `[lo, hi]`.
///
/// `h` returns the value and the derivative. Newton steps are taken while
/// they stay inside the current bracket; otherwise the bracket is bisected.
pub(crate) fn solve_increasing<H>(h: H, target: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    H: Fn(f64) -> (f64, f64),
{
    let (h_lo, _) = h(lo);
    let (h_hi, _) = h(hi);
    let slack = 1e-12 * (1.0 + target.abs());
    if target < h_lo - slack || target > h_hi + slack {
        return Err(Error::NonConvergence(format!(
            "target {target} outside bracket values [{h_lo}, {h_hi}]"
        )));
    }
    if target <= h_lo {
        return Ok(lo);
    }
    if target >= h_hi {
        return Ok(hi);
    }
    // linear interpolation as the first guess
    let mut x = lo + (target - h_lo) / (h_hi - h_lo) * (hi - lo);
    for _ in 0..MAX_ITER {
        let (v, dv) = h(x);
        let r = v - target;
        if r == 0.0 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - r / dv;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()) || hi - lo <= 4.0 * f64::EPSILON {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence(format!("root of increasing map near {x} (target {target})")))
}

/// Infallible variant for brackets that are valid by construction: the
/// target is clamped into `[h(lo), h(hi)]` first.
pub(crate) fn solve_clamped<H>(h: H, target: f64, lo: f64, hi: f64) -> f64
where
    H: Fn(f64) -> (f64, f64),
{
    let (h_lo, _) = h(lo);
    let (h_hi, _) = h(hi);
    let t = target.clamp(h_lo, h_hi);
    // cannot fail: the clamped target always lies in the bracket
    solve_increasing(h, t, lo, hi).unwrap_or(0.5 * (lo + hi))
}
