use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult {
    pub root: f64,
    /// `f(root)`.
    pub residual: f64,
    pub iterations: usize,
}

/// Stopping rules for [`find_root_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Accept as soon as `|f(x)| <= f_tol`.
    pub f_tol: f64,
    /// Accept once the bracket is narrower than `x_tol * max(1, |x|)`.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { f_tol: 0.0, x_tol: 1e-14, max_iter: 500 }
    }
}

/// Brent's method on a sign-changing bracket `[lo, hi]`.
pub fn find_root_bracketed<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<RootResult> {
    find_root_with(f, lo, hi, RootOptions { f_tol: tol, x_tol: tol, ..RootOptions::default() })
}

pub fn find_root_with<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<RootResult> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(RootResult { root: a, residual: fa, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(RootResult { root: b, residual: fb, iterations: 0 });
    }
    if fa.is_nan() || fb.is_nan() || (fa > 0.0) == (fb > 0.0) {
        return Err(Error::InvalidBracket { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }

    // b is the best estimate, c the contrapoint, a the previous iterate.
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=opts.max_iter {
        if (fb > 0.0) == (fc > 0.0) {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.x_tol * b.abs().max(1.0);
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= opts.f_tol || fb == 0.0 {
            return Ok(RootResult { root: b, residual: fb, iterations: iter });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::MaxIterations { iterations: iter, estimate: b });
        }
    }
    Err(Error::MaxIterations { iterations: opts.max_iter, estimate: b })
}
