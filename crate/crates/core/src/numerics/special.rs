// Error functions delegate to the `libm` port of the FreeBSD/musl
// routines, which keep full relative accuracy in the erfc tail.

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `(1 - e^{-u}) / u`, equal to 1 at `u = 0`.
#[inline]
pub(crate) fn one_minus_exp_ratio(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        -(-u).exp_m1() / u
    }
}

/// `(e^{-u} - 1 + u) / u`, equal to 0 at `u = 0`. Series near zero where
/// the direct form cancels.
pub(crate) fn exp_defect_ratio(u: f64) -> f64 {
    if u.abs() < 0.1 {
        // sum_{n>=2} (-u)^n / n! / u
        let mut term = u / 2.0;
        let mut sum = term;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= -u / n;
            sum += term;
        }
        sum
    } else {
        ((-u).exp_m1() + u) / u
    }
}
