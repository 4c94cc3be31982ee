//! Scalar root finding and quadrature used by the transform layer.
//!
//! Everything here is deliberately boring: bisection carries the convergence
//! guarantee, a few clamped Newton steps sharpen the answer afterwards, and
//! integration is adaptive Simpson with the usual /15 error estimate. The
//! transforms only ever hand us smooth monotone functions on explicit
//! brackets, so this is all they need.

use crate::error::{Error, Result};

/// Find `x` in `[lo, hi]` with `f(x) = 0`, assuming `f(lo)` and `f(hi)`
/// straddle zero. Bisection runs until the bracket is narrower than `tol`
/// (absolute), then up to four Newton steps with derivative `df` polish the
/// root. Newton iterates that leave the bracket or fail to reduce `|f|` are
/// discarded, so the result is never worse than plain bisection.
pub fn bisect_newton<F, D>(f: F, df: D, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(lo <= hi) {
        return Err(Error::invalid(format!("bad bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::numerical(format!(
            "NaN at bracket endpoint: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::invalid(format!(
            "no sign change on [{a}, {b}]: f = {fa}, {fb}"
        )));
    }
    let neg_at_a = fa < 0.0;
    // 200 halvings take any finite bracket below any positive tolerance.
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break; // bracket already at neighbouring floats
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }

    let mut x = 0.5 * (a + b);
    let mut fx = f(x);
    for _ in 0..4 {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        if !(next > a && next < b) {
            break;
        }
        let fnext = f(next);
        if fnext.abs() >= fx.abs() {
            break;
        }
        x = next;
        fx = fnext;
    }
    Ok(x)
}

/// Adaptive Simpson integral of `f` over `[a, b]` (signed; `a > b` flips the
/// sign) with absolute tolerance `abs_tol`. Fails if more than `max_intervals`
/// leaf intervals are needed.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, abs_tol: f64, max_intervals: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return adaptive_simpson(f, b, a, abs_tol, max_intervals).map(|v| -v);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut budget = max_intervals;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, abs_tol, 60, &mut budget)?;
    Ok(v)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if *budget == 0 {
        return Err(Error::numerical(format!(
            "quadrature interval budget exhausted near [{a}, {b}]"
        )));
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || depth == 0 {
        // Richardson extrapolation; the /15 cancels the leading error term.
        return Ok(left + right + err / 15.0);
    }
    let half = 0.5 * tol;
    let l = simpson_rec(f, a, m, fa, flm, fm, left, half, depth - 1, budget)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, half, depth - 1, budget)?;
    Ok(l + r)
}
