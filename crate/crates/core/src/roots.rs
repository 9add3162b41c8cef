//! Bracketed scalar root finders used by the calibration solvers.
//!
//! Both routines iterate until the bracket collapses to a few ulps rather
//! than stopping at a residual threshold; callers check residuals against
//! their own tolerance afterwards.

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

fn x_tol(x: f64) -> f64 {
    4.0 * f64::EPSILON * x.abs() + 1e-300
}

/// Brent's method on `[a, b]` given `f(a)` and `f(b)` of opposite sign (or one
/// of them zero).
pub(crate) fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    debug_assert!(fa * fb <= 0.0);
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, iterations: 0 });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for iter in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = x_tol(b);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(Root { x: b, fx: fb, iterations: iter });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok(Root { x: b, fx: fb, iterations: max_iter })
}

/// Newton's method safeguarded by bisection for an increasing function on
/// `[lo, hi]` with `f(lo) <= 0 <= f(hi)`. `f` returns the value and the
/// derivative.
pub(crate) fn newton_increasing<F>(mut f: F, lo: f64, hi: f64, x0: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut x = x0.clamp(lo, hi);
    let mut best = Root { x, fx: f64::INFINITY, iterations: 0 };

    for iter in 1..=max_iter {
        let (fx, dfx) = f(x)?;
        if fx.abs() < best.fx.abs() {
            best = Root { x, fx, iterations: iter };
        }
        if fx == 0.0 {
            return Ok(Root { x, fx, iterations: iter });
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / dfx;
        if !(dfx > 0.0 && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= x_tol(x) || hi - lo <= x_tol(hi) {
            let (fn_, _) = f(next)?;
            let candidate = Root { x: next, fx: fn_, iterations: iter + 1 };
            return Ok(if fn_.abs() <= best.fx.abs() { candidate } else { Root { iterations: iter + 1, ..best } });
        }
        x = next;
    }
    best.iterations = max_iter;
    Ok(best)
}
